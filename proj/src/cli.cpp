#include "maeast/cli.hpp"

#include <fstream>

#include "CLI11.hpp"
#include "maeast/bench.hpp"
#include "maeast/checkpoint.hpp"
#include "maeast/trainer.hpp"

namespace maeast {

namespace fs = std::filesystem;

namespace {

int cmd_features(const fs::path& in_dir, const fs::path& out_dir, std::ostream& out) {
  if (!fs::is_directory(in_dir)) throw std::runtime_error("input directory not found: " + in_dir.string());
  std::vector<fs::path> wavs;
  for (const auto& e : fs::recursive_directory_iterator(in_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
  if (wavs.empty()) throw std::runtime_error("no .wav files in " + in_dir.string());
  std::sort(wavs.begin(), wavs.end());
  std::vector<audio::Spectrogram> specs;
  for (const auto& w : wavs) {
    try {
      specs.push_back(audio::log_mel(audio::load_wav(w)));
    } catch (const std::exception& e) {
      throw std::runtime_error(w.string() + ": " + e.what());
    }
  }
  const audio::Normalizer norm = audio::fit_normalizer(specs);
  for (std::size_t i = 0; i < wavs.size(); ++i) {
    fs::path rel = fs::relative(wavs[i], in_dir);
    rel.replace_extension(".fbank");
    fs::create_directories((out_dir / rel).parent_path());
    audio::write_fbank(out_dir / rel, specs[i]);
  }
  audio::save_normalizer(out_dir / "normalizer.json", norm);
  out << nlohmann::json{{"clips", wavs.size()},
                        {"mean", norm.mean},
                        {"std", norm.std},
                        {"degenerate", norm.degenerate}}
             .dump()
      << "\n";
  return 0;
}

int cmd_pretrain(const fs::path& config, std::ostream& out) {
  const auto cfg = train::train_config_from(RunConfig::load(config));
  const auto res = train::pretrain(cfg);
  nlohmann::json summary = {{"steps", cfg.total_steps}, {"checkpoint", res.final_checkpoint.string()}};
  if (!res.log.empty()) summary["final"] = train::to_json(res.log.back());
  out << summary.dump() << "\n";
  return 0;
}

int cmd_finetune(const fs::path& ckpt, const fs::path& config, std::ostream& out) {
  const auto cfg = train::finetune_config_from(RunConfig::load(config));
  out << train::to_json(train::finetune(ckpt, cfg)).dump() << "\n";
  return 0;
}

int cmd_benchmark(const fs::path& config, const fs::path& report, const std::string& csv, std::ostream& out) {
  const auto cfg = bench::bench_config_from(RunConfig::load(config));
  const auto rep = bench::run_bench(cfg);
  const auto j = bench::to_json(rep);
  std::ofstream(report) << j.dump(2) << "\n";
  if (!csv.empty()) {
    const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
    std::ofstream f(csv, std::ios::app);
    if (fresh) f << bench::csv_header() << "\n";
    f << bench::csv_row(rep) << "\n";
  }
  out << j.dump() << "\n";
  return 0;
}

int cmd_mask_stats(const std::string& strategy, Index n, double p, Index trials, std::uint64_t seed, Index rows,
                   std::ostream& out) {
  masking::Strategy s;
  try {
    s = masking::parse_strategy(strategy);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("strategy", e.what());
  }
  const bool frame = s == masking::Strategy::FrameRandom || s == masking::Strategy::FrameChunked;
  if (rows <= 0) rows = frame ? 1 : 8;
  if (n % rows != 0) throw ConfigError("n", "N must be a multiple of the row count " + std::to_string(rows));
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("p", "p must lie in (0, 1)");
  if (trials < 1) throw ConfigError("trials", "trials must be >= 1");
  const auto st = masking::mask_stats(s, n, p, trials, seed, rows);
  out << nlohmann::json{{"strategy", masking::to_string(st.strategy)},
                        {"N", st.n},
                        {"p", st.p},
                        {"trials", st.trials},
                        {"mean_fraction", st.mean_fraction},
                        {"std_fraction", st.std_fraction},
                        {"clustering_stat", st.clustering_stat}}
             .dump()
      << "\n";
  return 0;
}

int cmd_inspect(const fs::path& dir, std::ostream& out) {
  nlohmann::ordered_json j = nn::read_manifest_json(dir);
  Index count = 0;
  for (const auto& e : nn::read_manifest(dir)) {
    Index n = 1;
    for (Index s : e.shape) n *= s;
    count += n;
  }
  j["parameter_count"] = count;
  if (fs::exists(dir / "model.json")) {
    const auto cfg = model::read_checkpoint_config(dir);
    j["model"] = model::to_json(cfg);
    j["expected_parameter_count"] = model::expected_parameter_count(cfg);
  }
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked spectrogram transformer pretraining toolkit", "maeast"};
  app.require_subcommand(1);

  std::string in_dir, out_dir;
  auto* features = app.add_subcommand("features", "Convert a directory of WAV files to log-mel .fbank files");
  features->add_option("--in", in_dir, "WAV directory")->required();
  features->add_option("--out", out_dir, "output directory")->required();

  std::string config;
  auto* pretrain = app.add_subcommand("pretrain", "Run masked pretraining");
  pretrain->add_option("--config", config, "key=value config file")->required();

  std::string ckpt;
  auto* finetune = app.add_subcommand("finetune", "Train a classifier on pooled encoder states");
  finetune->add_option("--ckpt", ckpt, "pretrained checkpoint directory")->required();
  finetune->add_option("--config", config, "key=value config file")->required();

  std::string report, csv;
  auto* benchmark = app.add_subcommand("benchmark", "Time the encoder-decoder model against the mask-token baseline");
  benchmark->add_option("--config", config, "key=value config file")->required();
  benchmark->add_option("--report", report, "JSON report path")->required();
  benchmark->add_option("--csv", csv, "append a CSV row here");

  std::string strategy;
  Index n = 0, trials = 1000, rows = 0;
  double p = 0.75;
  std::uint64_t seed = 0;
  auto* mstats = app.add_subcommand("mask-stats", "Monte Carlo masking statistics");
  mstats->add_option("--strategy", strategy, "patch-random | patch-chunked | frame-random | frame-chunked")
      ->required();
  mstats->add_option("--n", n, "tokens per clip")->required();
  mstats->add_option("--p", p, "mask ratio")->required();
  mstats->add_option("--trials", trials, "number of plans");
  mstats->add_option("--seed", seed, "seed");
  mstats->add_option("--rows", rows, "channel rows per time step (default 8 for patch, 1 for frame)");

  std::string inspect_dir;
  auto* inspect = app.add_subcommand("inspect-ckpt", "Print a checkpoint manifest");
  inspect->add_option("checkpoint", inspect_dir, "checkpoint directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*features) return cmd_features(in_dir, out_dir, out);
    if (*pretrain) return cmd_pretrain(config, out);
    if (*finetune) return cmd_finetune(ckpt, config, out);
    if (*benchmark) return cmd_benchmark(config, report, csv, out);
    if (*mstats) return cmd_mask_stats(strategy, n, p, trials, seed, rows, out);
    if (*inspect) return cmd_inspect(inspect_dir, out);
  } catch (const ConfigError& e) {
    err << "config error";
    if (!e.key().empty()) err << " [" << e.key() << "]";
    err << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace maeast
