#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include "mbgen/checkpoint.hpp"
#include "mbgen/config.hpp"
#include "mbgen/decoder.hpp"
#include "mbgen/diffusion.hpp"
#include "mbgen/encoder.hpp"
#include "mbgen/graph_io.hpp"
#include "mbgen/metrics.hpp"
#include "mbgen/mgf.hpp"
#include "mbgen/selftest.hpp"
#include "mbgen/toydata.hpp"
#include "mbgen/train.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace mbgen;

void apply_thread_env() {
#ifdef _OPENMP
  if (const char* t = std::getenv("MBGEN_THREADS")) {
    const int n = std::atoi(t);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

EncoderConfig encoder_config(const Config& cfg) {
  EncoderConfig ec;
  ec.dim = cfg.uinteger("enc_dim", 64);
  ec.heads = cfg.uinteger("enc_heads", 4);
  ec.layers = cfg.uinteger("enc_layers", 2);
  ec.fp_bits = cfg.uinteger("fp_bits", 2048);
  return ec;
}

DecoderConfig decoder_config(const Config& cfg) {
  DecoderConfig dc;
  dc.node_dim = cfg.uinteger("dec_node_dim", 32);
  dc.edge_dim = cfg.uinteger("dec_edge_dim", 16);
  dc.layers = cfg.uinteger("dec_layers", 2);
  dc.node_heads = cfg.uinteger("dec_node_heads", 4);
  dc.mb_heads = cfg.uinteger("dec_mb_heads", 2);
  dc.ffn_hidden = cfg.uinteger("dec_ffn_hidden", 32);
  dc.cond_dim = cfg.uinteger("cond_dim", 32);
  dc.time_dim = cfg.uinteger("time_dim", 16);
  dc.y_dim = cfg.uinteger("enc_dim", 64);
  dc.many_body = cfg.flag("many_body", true);
  dc.n_max = cfg.uinteger("n_max", 12);
  return dc;
}

StageConfig stage_config(const Config& cfg, std::uint64_t seed) {
  StageConfig sc;
  sc.steps = cfg.uinteger("steps", 2000);
  sc.batch = cfg.uinteger("batch", 8);
  sc.lr = cfg.real("lr", 1e-3);
  sc.beta1 = cfg.real("beta1", 0.9);
  sc.beta2 = cfg.real("beta2", 0.999);
  sc.eps = cfg.real("adam_eps", 1e-8);
  sc.seed = seed;
  sc.n_max = cfg.uinteger("n_max", 12);
  sc.freeze_encoder = cfg.flag("freeze_encoder", false);
  sc.log_every = cfg.uinteger("log_every", 200);
  return sc;
}

NoiseSchedule schedule_from(const Config& cfg) {
  return NoiseSchedule::cosine(cfg.uinteger("diffusion_T", 50));
}

std::vector<double> marginal_from_items(const std::vector<TrainItem>& items,
                                        const Config& cfg) {
  std::vector<const MolecularGraph*> gs;
  gs.reserve(items.size());
  for (const TrainItem& it : items) gs.push_back(&it.graph);
  return estimate_marginal(gs, kBondClasses, cfg.real("marginal_floor", 1e-3));
}

void warn_unused(const Config& cfg) {
  for (const std::string& k : cfg.unused_keys())
    std::cerr << "warning: config key '" << k << "' was not used by this command\n";
}

void write_losses(const std::string& path, const StageResult& res) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write loss log " + path);
  out << "step\tloss\n";
  char buf[64];
  for (std::size_t i = 0; i < res.losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.8f\n", i + 1, res.losses[i]);
    out << buf;
  }
}

Checkpoint make_checkpoint(const std::string& stage, const Config& cfg, std::uint64_t seed) {
  Checkpoint ck;
  ck.stage = stage;
  ck.config_echo = cfg.echo();
  ck.rng_seed = seed;
  return ck;
}

std::vector<TrainItem> load_joined(const Config& cfg) {
  const auto graphs = load_graph_dataset(cfg.require_str("graphs"));
  const auto spectra = parse_mgf(cfg.require_str("spectra"));
  return join_dataset(graphs, spectra, static_cast<int>(cfg.uinteger("fp_radius", 2)),
                      cfg.uinteger("fp_bits", 2048));
}

// models assembled for sampling/evaluation from a finetuned checkpoint (or an
// encoder + decoder checkpoint pair)
struct LoadedModel {
  ParamStore enc_store, dec_store;
  std::unique_ptr<SpectrumEncoder> enc;
  std::unique_ptr<ManyBodyDecoder> dec;
  std::unique_ptr<FingerprintConditioner> cond;
  TransitionMatrices tm;
};

LoadedModel load_model(const Config& cfg) {
  LoadedModel m;
  Rng init(0);  // overwritten by checkpoint values
  m.enc = std::make_unique<SpectrumEncoder>(encoder_config(cfg), m.enc_store, init);
  m.dec = std::make_unique<ManyBodyDecoder>(decoder_config(cfg), m.dec_store, init);
  m.cond = std::make_unique<FingerprintConditioner>(
      decoder_config(cfg).y_dim, cfg.uinteger("fp_bits", 2048), m.dec_store, init);

  const std::string enc_path = cfg.require_str("enc_ckpt");
  const std::string dec_path = cfg.require_str("dec_ckpt");
  const Checkpoint enc_ck = load_checkpoint(enc_path);
  enc_ck.apply_to(m.enc_store);
  const Checkpoint dec_ck = enc_path == dec_path ? enc_ck : load_checkpoint(dec_path);
  dec_ck.apply_to(m.dec_store);

  const Tensor* marginal = dec_ck.find("diffusion.marginal");
  if (!marginal)
    throw std::runtime_error("checkpoint " + dec_path + " carries no diffusion.marginal");
  m.tm = build_transitions(schedule_from(cfg), marginal->data);
  return m;
}

int cmd_gen_toy(const Config& cfg, std::uint64_t seed) {
  ToySpec spec;
  spec.molecule_count = cfg.uinteger("toy_molecules", 20);
  spec.min_heavy_atoms = cfg.uinteger("toy_min_atoms", 3);
  spec.max_heavy_atoms = cfg.uinteger("toy_max_atoms", 9);
  spec.fragment_depth = static_cast<int>(cfg.uinteger("toy_depth", 2));
  spec.isomers_per_formula = cfg.uinteger("toy_isomers_per_formula", 1);
  spec.seed = seed;
  ToyDataset ds = generate_toy_dataset(spec);
  write_toy_dataset(ds, cfg.require_str("graphs"), cfg.require_str("spectra"));
  std::cout << "wrote " << ds.graphs.size() << " molecules\n";
  warn_unused(cfg);
  return 0;
}

int cmd_pretrain_encoder(const Config& cfg, std::uint64_t seed) {
  auto items = load_joined(cfg);
  ParamStore store;
  Rng init(seed);
  SpectrumEncoder enc(encoder_config(cfg), store, init);
  StageConfig sc = stage_config(cfg, seed);
  StageResult res = pretrain_encoder(enc, store, items, sc);
  Checkpoint ck = make_checkpoint("encoder-pretrain", cfg, seed);
  ck.rng_counter = init.counter();
  ck.add_params(store);
  save_checkpoint(cfg.require_str("out_ckpt"), ck);
  write_losses(cfg.str("loss_log", ""), res);
  std::cout << "encoder-pretrain: final loss " << res.losses.back() << "\n";
  warn_unused(cfg);
  return 0;
}

int cmd_pretrain_decoder(const Config& cfg, std::uint64_t seed) {
  const auto graphs = load_graph_dataset(cfg.require_str("graphs"));
  auto items = items_from_graphs(graphs, static_cast<int>(cfg.uinteger("fp_radius", 2)),
                                 cfg.uinteger("fp_bits", 2048));
  ParamStore store;
  Rng init(seed);
  ManyBodyDecoder dec(decoder_config(cfg), store, init);
  FingerprintConditioner cond(decoder_config(cfg).y_dim, cfg.uinteger("fp_bits", 2048), store,
                              init);
  const std::vector<double> marginal = marginal_from_items(items, cfg);
  TransitionMatrices tm = build_transitions(schedule_from(cfg), marginal);
  StageConfig sc = stage_config(cfg, seed);
  StageResult res = pretrain_decoder(dec, cond, store, items, tm, sc);
  Checkpoint ck = make_checkpoint("decoder-pretrain", cfg, seed);
  ck.rng_counter = init.counter();
  ck.add_params(store);
  ck.add_tensor("diffusion.marginal", Tensor(Shape{kBondClasses}, marginal));
  save_checkpoint(cfg.require_str("out_ckpt"), ck);
  write_losses(cfg.str("loss_log", ""), res);
  std::cout << "decoder-pretrain: final loss " << res.losses.back() << "\n";
  warn_unused(cfg);
  return 0;
}

int cmd_finetune(const Config& cfg, std::uint64_t seed) {
  auto items = load_joined(cfg);
  ParamStore enc_store, dec_store;
  Rng init(seed);
  SpectrumEncoder enc(encoder_config(cfg), enc_store, init);
  ManyBodyDecoder dec(decoder_config(cfg), dec_store, init);
  FingerprintConditioner cond(decoder_config(cfg).y_dim, cfg.uinteger("fp_bits", 2048),
                              dec_store, init);
  load_checkpoint(cfg.require_str("enc_ckpt")).apply_to(enc_store);
  const Checkpoint dec_ck = load_checkpoint(cfg.require_str("dec_ckpt"));
  dec_ck.apply_to(dec_store);
  const Tensor* marginal = dec_ck.find("diffusion.marginal");
  if (!marginal) throw std::runtime_error("decoder checkpoint carries no diffusion.marginal");
  TransitionMatrices tm = build_transitions(schedule_from(cfg), marginal->data);
  StageConfig sc = stage_config(cfg, seed);
  StageResult res = finetune(enc, enc_store, dec, dec_store, items, tm, sc);
  Checkpoint ck = make_checkpoint("finetune", cfg, seed);
  ck.rng_counter = init.counter();
  ck.add_params(enc_store);
  ck.add_params(dec_store);
  ck.add_tensor("diffusion.marginal", Tensor(Shape{kBondClasses}, marginal->data));
  save_checkpoint(cfg.require_str("out_ckpt"), ck);
  write_losses(cfg.str("loss_log", ""), res);
  std::cout << "finetune: final loss " << res.losses.back() << "\n";
  warn_unused(cfg);
  return 0;
}

int cmd_sample(const Config& cfg, std::uint64_t seed, const std::string& spectra_path,
               const std::string& out_path) {
  apply_thread_env();
  LoadedModel m = load_model(cfg);
  const auto spectra = parse_mgf(spectra_path);
  const std::size_t per = cfg.uinteger("samples_per_spectrum", 1);
  std::vector<GraphRecord> out;
  for (std::size_t si = 0; si < spectra.size(); ++si) {
    const Spectrum& s = spectra[si];
    Tensor y;
    {
      Tape t(false);
      y = t.val(m.enc->encode(t, s));
    }
    Rng rng = Rng(seed).child(si);
    for (std::size_t k = 0; k < per; ++k) {
      GraphRecord rec;
      rec.id = per == 1 ? s.id : s.id + "#" + std::to_string(k + 1);
      Rng chain = rng.child(k);
      rec.graph = sample_molecule(s.precursor, y, *m.dec, m.tm, chain);
      rec.formula = rec.graph.formula();
      out.push_back(std::move(rec));
    }
  }
  write_graph_dataset(out_path, out);
  std::cout << "sampled " << out.size() << " molecules -> " << out_path << "\n";
  warn_unused(cfg);
  return 0;
}

int cmd_evaluate(const Config& cfg, std::uint64_t seed) {
  apply_thread_env();
  LoadedModel m = load_model(cfg);
  auto items = load_joined(cfg);
  EvalConfig ec;
  ec.n_candidates = cfg.uinteger("n_candidates", 100);
  ec.fp_radius = static_cast<int>(cfg.uinteger("fp_radius", 2));
  ec.fp_bits = cfg.uinteger("fp_bits", 2048);
  ec.mces_budget = cfg.uinteger("mces_budget", 2000000);
  ec.seed = seed;
  EvalReport report = evaluate_dataset(items, *m.enc, *m.dec, m.tm, ec);
  const std::string tsv = report.to_tsv();
  const std::string out_path = cfg.str("report", "");
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report " + out_path);
    out << tsv;
  }
  std::cout << tsv;
  warn_unused(cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"many-body graph diffusion for spectrum-conditioned molecule generation"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string spectra_path, out_path;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "key = value configuration file");
    if (needs_config) opt->required();
    sub->add_option("--seed", seed, "root seed for all randomness");
    return sub;
  };

  auto* c_gen = add_common(app.add_subcommand("gen-toy", "generate a toy dataset"), true);
  auto* c_pe = add_common(
      app.add_subcommand("pretrain-encoder", "train the spectrum encoder on fingerprints"),
      true);
  auto* c_pd = add_common(
      app.add_subcommand("pretrain-decoder", "train the decoder with fingerprint conditions"),
      true);
  auto* c_ft =
      add_common(app.add_subcommand("finetune", "joint spectrum-conditioned training"), true);
  auto* c_sm = add_common(app.add_subcommand("sample", "sample molecules for spectra"), true);
  c_sm->add_option("--spectra", spectra_path, "input MGF file")->required();
  c_sm->add_option("--out", out_path, "output graph file")->required();
  auto* c_ev = add_common(
      app.add_subcommand("evaluate", "candidate generation and metric report"), true);
  auto* c_st =
      add_common(app.add_subcommand("selftest", "run the oracle/invariant suite"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (c_st->parsed()) {
      const int failures = mbgen::run_selftest(std::cout);
      if (failures) {
        std::cout << failures << " check(s) failed\n";
        return 1;
      }
      std::cout << "all checks passed\n";
      return 0;
    }
    const mbgen::Config cfg = mbgen::Config::load(config_path);
    if (c_gen->parsed()) return cmd_gen_toy(cfg, seed);
    if (c_pe->parsed()) return cmd_pretrain_encoder(cfg, seed);
    if (c_pd->parsed()) return cmd_pretrain_decoder(cfg, seed);
    if (c_ft->parsed()) return cmd_finetune(cfg, seed);
    if (c_sm->parsed()) return cmd_sample(cfg, seed, spectra_path, out_path);
    if (c_ev->parsed()) return cmd_evaluate(cfg, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
