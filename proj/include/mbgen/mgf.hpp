#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mbgen/spectrum.hpp"

namespace mbgen {

// MGF blocks: BEGIN IONS / END IONS with KEY=VALUE metadata (TITLE and
// FORMULA required) followed by peak lines "<mz> <intensity> <formula>".
// The third column is the fragment formula annotation and is mandatory.
// All diagnostics carry line numbers; intensities come back normalized.
std::vector<Spectrum> parse_mgf(const std::string& path);
std::vector<Spectrum> parse_mgf_stream(std::istream& in, const std::string& origin);

void write_mgf(std::ostream& out, const std::vector<Spectrum>& spectra);
void write_mgf_file(const std::string& path, const std::vector<Spectrum>& spectra);

}  // namespace mbgen
