#include "mbgen/mgf.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mbgen {

namespace {
std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
}

double parse_number(const std::string& tok, const std::string& origin, std::size_t line,
                    const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) fail(origin, line, std::string("malformed ") + what + ": " + tok);
    return v;
  } catch (const std::invalid_argument&) {
    fail(origin, line, std::string("malformed ") + what + ": " + tok);
  } catch (const std::out_of_range&) {
    fail(origin, line, std::string(what) + " out of range: " + tok);
  }
}
}  // namespace

std::vector<Spectrum> parse_mgf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("mgf: cannot open " + path);
  return parse_mgf_stream(in, path);
}

std::vector<Spectrum> parse_mgf_stream(std::istream& in, const std::string& origin) {
  std::vector<Spectrum> out;
  std::string line;
  std::size_t lineno = 0;

  bool in_block = false;
  std::size_t block_start = 0;
  bool seen_peaks = false;
  Spectrum cur;
  bool have_title = false, have_formula = false;

  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!in_block) {
      if (t == "BEGIN IONS") {
        in_block = true;
        block_start = lineno;
        seen_peaks = false;
        cur = Spectrum{};
        have_title = have_formula = false;
        continue;
      }
      fail(origin, lineno, "expected BEGIN IONS, got '" + t + "'");
    }
    if (t == "BEGIN IONS") fail(origin, lineno, "nested BEGIN IONS");
    if (t == "END IONS") {
      if (!have_title) fail(origin, block_start, "block missing TITLE");
      if (!have_formula) fail(origin, block_start, "block missing FORMULA");
      if (cur.peaks.empty()) fail(origin, block_start, "block has no peaks");
      cur.normalize();
      cur.validate();
      out.push_back(std::move(cur));
      in_block = false;
      continue;
    }
    const std::size_t eq = t.find('=');
    const bool looks_metadata = eq != std::string::npos && t.find_first_of(" \t") > eq;
    if (looks_metadata) {
      if (seen_peaks) fail(origin, lineno, "metadata after peak lines");
      const std::string key = t.substr(0, eq);
      const std::string val = trim(t.substr(eq + 1));
      if (key == "TITLE") {
        cur.id = val;
        have_title = true;
      } else if (key == "FORMULA") {
        try {
          cur.precursor = parse_formula(val);
        } catch (const std::exception& e) {
          fail(origin, lineno, std::string("bad FORMULA: ") + e.what());
        }
        have_formula = true;
      }
      // other metadata keys (PEPMASS, CHARGE, ...) are accepted and ignored
      continue;
    }
    // peak line
    if (!have_formula) fail(origin, lineno, "peak line before FORMULA");
    std::istringstream ps(t);
    std::string mz_tok, int_tok, formula_tok, extra;
    ps >> mz_tok >> int_tok >> formula_tok;
    if (formula_tok.empty())
      fail(origin, lineno, "peak line needs '<mz> <intensity> <formula>' (missing annotation)");
    if (ps >> extra) fail(origin, lineno, "trailing token on peak line: " + extra);
    Peak p;
    p.mz = parse_number(mz_tok, origin, lineno, "m/z");
    p.intensity = parse_number(int_tok, origin, lineno, "intensity");
    if (p.mz <= 0.0) fail(origin, lineno, "m/z must be positive");
    if (p.intensity < 0.0) fail(origin, lineno, "intensity must be nonnegative");
    try {
      p.formula = parse_formula(formula_tok);
    } catch (const std::exception& e) {
      fail(origin, lineno, std::string("bad peak formula: ") + e.what());
    }
    if (!cur.precursor.contains(p.formula))
      fail(origin, lineno,
           "peak formula " + formula_tok + " is not a sub-formula of the precursor");
    cur.peaks.push_back(std::move(p));
    seen_peaks = true;
  }
  if (in_block)
    fail(origin, block_start, "BEGIN IONS without matching END IONS (unexpected end of file)");
  return out;
}

void write_mgf(std::ostream& out, const std::vector<Spectrum>& spectra) {
  char buf[128];
  for (const Spectrum& s : spectra) {
    out << "BEGIN IONS\n";
    out << "TITLE=" << s.id << "\n";
    out << "FORMULA=" << s.precursor.to_string() << "\n";
    std::snprintf(buf, sizeof buf, "PEPMASS=%.6f", s.precursor.monoisotopic_mass());
    out << buf << "\n";
    for (const Peak& p : s.peaks) {
      std::snprintf(buf, sizeof buf, "%.6f %.8f ", p.mz, p.intensity);
      out << buf << p.formula.to_string() << "\n";
    }
    out << "END IONS\n\n";
  }
}

void write_mgf_file(const std::string& path, const std::vector<Spectrum>& spectra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("mgf: cannot write " + path);
  write_mgf(out, spectra);
}

}  // namespace mbgen
