#include "maeast/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "maeast/blas.hpp"
#include "maeast/checkpoint.hpp"
#include "maeast/optim.hpp"

namespace maeast::train {

using model::MaeAstModel;
using nn::Tensor;
using nn::Var;

void TrainConfig::validate() const {
  if (total_steps < 0) throw ConfigError("total_steps", "total_steps must be >= 0");
  if (max_tokens_per_batch < 1) throw ConfigError("max_tokens_per_batch", "max_tokens_per_batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr", "lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay", "weight_decay must be >= 0");
  if (!(lr_power > 0.0)) throw ConfigError("lr_power", "lr_power must be positive");
  if (warmup_steps < 0 || (total_steps > 0 && warmup_steps >= total_steps && warmup_steps > 0))
    throw ConfigError("warmup_steps", "warmup_steps must lie in [0, total_steps)");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio", "mask_ratio must lie in (0, 1)");
  if (span_length < 1) throw ConfigError("span_length", "span_length must be >= 1");
  if (log_every < 1) throw ConfigError("log_every", "log_every must be >= 1");
  if (ckpt_every < 1) throw ConfigError("ckpt_every", "ckpt_every must be >= 1");
  if (threads < 1) throw ConfigError("threads", "threads must be >= 1");
  if (!(std::isfinite(loss.lambda) && loss.lambda >= 0.0)) throw ConfigError("lambda", "lambda must be >= 0");
  if (!loss.use_generative && !loss.use_discriminative)
    throw ConfigError("use_discriminative", "at least one of use_generative / use_discriminative must be true");
  const bool frame_strategy =
      mask_strategy == masking::Strategy::FrameRandom || mask_strategy == masking::Strategy::FrameChunked;
  if (frame_strategy != (model.mode.kind == tokens::TokenKind::Frame))
    throw ConfigError("mask_strategy", "mask_strategy " + masking::to_string(mask_strategy) +
                                           " does not match tokenization mode " + tokens::to_string(model.mode.kind));
}

nlohmann::json to_json(const StepMetrics& m) {
  return {{"step", m.step},   {"total", m.total},
          {"recon", m.recon}, {"nce", m.nce},
          {"lr", m.lr},       {"tokens_per_sec", m.tokens_per_sec},
          {"peak_bytes", m.peak_bytes}};
}

std::vector<std::vector<std::size_t>> batch_by_tokens(std::span<const TokenBatch> clips, Index max_tokens) {
  if (max_tokens < 1) throw std::invalid_argument("token budget must be >= 1");
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  Index used = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Index n = clips[i].n_tokens();
    if (n > max_tokens)
      throw std::invalid_argument("clip '" + clips[i].clip_id + "' has " + std::to_string(n) +
                                  " tokens, more than the batch budget of " + std::to_string(max_tokens));
    if (used + n > max_tokens) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(i);
    used += n;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

std::vector<masking::MaskPlan> draw_masks(std::span<const TokenBatch> batch, const TrainConfig& cfg,
                                          std::uint64_t seed) {
  std::vector<masking::MaskPlan> plans;
  plans.reserve(batch.size());
  std::map<std::pair<Index, Index>, masking::MaskPlan> shared;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& clip = batch[b];
    if (cfg.mask_strategy == masking::Strategy::PatchChunked) {
      const auto key = std::make_pair(clip.n_time_steps, clip.n_channel_rows);
      auto it = shared.find(key);
      if (it == shared.end())
        it = shared
                 .emplace(key, masking::sample_plan(cfg.mask_strategy, clip.n_time_steps, clip.n_channel_rows,
                                                    cfg.mask_ratio, mix_seed(seed, static_cast<std::uint64_t>(
                                                                                       clip.n_tokens()))))
                 .first;
      plans.push_back(it->second);
    } else {
      plans.push_back(masking::sample_plan(cfg.mask_strategy, clip.n_time_steps, clip.n_channel_rows, cfg.mask_ratio,
                                           mix_seed(seed, b), cfg.span_length));
    }
  }
  return plans;
}

Corpus load_corpus(const fs::path& dir, tokens::TokenizationMode mode) {
  return load_corpus(dir, mode, nullptr);
}

Corpus load_corpus(const fs::path& dir, tokens::TokenizationMode mode, const audio::Normalizer* fixed) {
  if (!fs::is_directory(dir)) throw std::runtime_error("data directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".fbank") files.push_back(e.path());
  if (files.empty()) throw std::runtime_error("no .fbank feature files in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<audio::Spectrogram> specs;
  specs.reserve(files.size());
  for (const auto& f : files) specs.push_back(audio::read_fbank(f));
  Corpus corpus;
  if (fixed)
    corpus.normalizer = *fixed;
  else if (fs::exists(dir / "normalizer.json"))
    corpus.normalizer = audio::load_normalizer(dir / "normalizer.json");
  else
    corpus.normalizer = audio::fit_normalizer(specs);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string id = fs::relative(files[i], dir).generic_string();
    try {
      corpus.clips.push_back(tokens::tokenize(audio::normalize(specs[i], corpus.normalizer), mode, id));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("clip '" + id + "': " + e.what());
    }
  }
  return corpus;
}

void write_checkpoint_atomic(const MaeAstModel<float>& model, const audio::Normalizer& norm, const fs::path& dir) {
  const fs::path tmp = dir.parent_path() / (dir.filename().string() + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  model::save_model_checkpoint(model, norm, tmp);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

namespace {

std::vector<TokenBatch> gather(std::span<const TokenBatch> clips, const std::vector<std::size_t>& idx) {
  std::vector<TokenBatch> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(clips[i]);
  return out;
}

}  // namespace

TrainResult pretrain(MaeAstModel<float>& model, const Corpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.clips.empty()) throw std::runtime_error("pretraining corpus is empty");
  nn::set_thread_count(cfg.threads);

  std::ofstream metrics;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    metrics.open(cfg.out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write metrics log in " + cfg.out_dir.string());
  }

  nn::AdamHyper hyper;
  hyper.weight_decay = cfg.weight_decay;
  nn::Adam<float> adam(model.parameters(), hyper);
  objectives::LossConfig loss_cfg = cfg.loss;

  // Epoch plan: clip order reshuffled per epoch from (seed, epoch).
  std::uint64_t epoch = 0;
  std::vector<std::vector<std::size_t>> epoch_batches;
  std::size_t next_batch = 0;
  auto start_epoch = [&] {
    std::vector<std::size_t> order(corpus.clips.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x65706f6368ULL, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<TokenBatch> shuffled = gather(corpus.clips, order);
    epoch_batches = batch_by_tokens(shuffled, cfg.max_tokens_per_batch);
    for (auto& b : epoch_batches)
      for (auto& i : b) i = order[i];
    next_batch = 0;
    ++epoch;
  };
  start_epoch();

  std::vector<TokenBatch> fixed_batch;
  std::vector<masking::MaskPlan> fixed_plans;
  if (cfg.overfit) {
    fixed_batch = gather(corpus.clips, epoch_batches.front());
    fixed_plans = draw_masks(fixed_batch, cfg, mix_seed(cfg.seed, 0x6d61736bULL, 0));
  }

  TrainResult result;
  std::string last_good;
  for (Index step = 0; step < cfg.total_steps; ++step) {
    std::vector<TokenBatch> batch;
    std::vector<masking::MaskPlan> plans;
    if (cfg.overfit) {
      batch = fixed_batch;
      plans = fixed_plans;
    } else {
      if (next_batch == epoch_batches.size()) start_epoch();
      batch = gather(corpus.clips, epoch_batches[next_batch++]);
      plans = draw_masks(batch, cfg, mix_seed(cfg.seed, 0x6d61736bULL, static_cast<std::uint64_t>(step)));
    }
    Index tokens = 0;
    for (const auto& c : batch) tokens += c.n_tokens();

    const double lr = nn::poly_decay_lr(step, cfg.total_steps, cfg.lr, cfg.lr_power, cfg.warmup_steps);
    const auto t0 = std::chrono::steady_clock::now();
    objectives::JointLoss<float> loss;
    try {
      model.parameters().zero_grad();
      const auto out = model.pretrain_forward(batch, plans);
      loss = objectives::joint_loss(out, loss_cfg);
      nn::backward(loss.total);
      adam.step(lr);
    } catch (const NumericFault& e) {
      throw NumericFault("step " + std::to_string(step + 1) + ": " + e.what() +
                         (last_good.empty() ? std::string("; no checkpoint written yet")
                                            : "; last good checkpoint " + last_good));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const double total = static_cast<double>(loss.total.value()[0]);
    if (step == 0) result.initial_loss = total;
    if ((step + 1) % cfg.log_every == 0) {
      StepMetrics m{step + 1, total, loss.recon, loss.nce, lr, secs > 0 ? tokens / secs : 0.0,
                    nn::MemoryTracker::peak_bytes()};
      result.log.push_back(m);
      if (metrics) metrics << to_json(m).dump() << "\n" << std::flush;
    }
    if (!cfg.out_dir.empty() && (step + 1) % cfg.ckpt_every == 0 && step + 1 < cfg.total_steps) {
      const fs::path dir = cfg.out_dir / ("step_" + std::to_string(step + 1));
      write_checkpoint_atomic(model, corpus.normalizer, dir);
      last_good = dir.string();
    }
  }
  if (!cfg.out_dir.empty()) {
    result.final_checkpoint = cfg.out_dir / "final";
    write_checkpoint_atomic(model, corpus.normalizer, result.final_checkpoint);
  }
  return result;
}

TrainResult pretrain(const TrainConfig& cfg) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg.data_dir, cfg.model.mode);
  MaeAstModel<float> model(cfg.model, cfg.seed);
  return pretrain(model, corpus, cfg);
}

model::ModelConfig model_config_from(const RunConfig& rc) {
  model::ModelConfig m;
  m.enc_layers = rc.get_int("enc_layers", m.enc_layers);
  m.dec_layers = rc.get_int("dec_layers", m.dec_layers);
  m.d = rc.get_int("d", m.d);
  m.heads = rc.get_int("heads", m.heads);
  try {
    m.mode = tokens::parse_mode(rc.get_string("mode", "patch"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("mode", e.what());
  }
  try {
    m.variant = model::parse_variant(rc.get_string("variant", "mae"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("variant", e.what());
  }
  if (m.enc_layers < 0) throw ConfigError("enc_layers", "enc_layers must be >= 0");
  if (m.dec_layers < 1) throw ConfigError("dec_layers", "dec_layers must be >= 1");
  if (m.d <= 0 || m.d % 2 != 0) throw ConfigError("d", "d must be positive and even");
  if (m.heads <= 0 || m.d % m.heads != 0) throw ConfigError("heads", "heads must divide d");
  if (m.variant == model::Variant::WithMaskTokens && m.enc_layers != 0)
    throw ConfigError("enc_layers", "the with-mask-tokens variant puts every layer in dec_layers; set enc_layers = 0");
  m.validate();
  return m;
}

TrainConfig train_config_from(const RunConfig& rc) {
  TrainConfig c;
  c.model = model_config_from(rc);
  c.data_dir = rc.get_string("data_dir");
  c.out_dir = rc.get_string("out_dir");
  c.total_steps = rc.get_int("total_steps");
  c.max_tokens_per_batch = rc.get_int("max_tokens_per_batch", c.max_tokens_per_batch);
  c.lr = rc.get_double("lr", c.lr);
  c.weight_decay = rc.get_double("weight_decay", c.weight_decay);
  c.lr_power = rc.get_double("lr_power", c.lr_power);
  c.warmup_steps = rc.get_int("warmup_steps", c.warmup_steps);
  c.seed = static_cast<std::uint64_t>(rc.get_int("seed", 0));
  c.loss.lambda = rc.get_double("lambda", c.loss.lambda);
  c.loss.use_generative = rc.get_bool("use_generative", true);
  c.loss.use_discriminative = rc.get_bool("use_discriminative", true);
  try {
    c.mask_strategy = masking::parse_strategy(
        rc.get_string("mask_strategy", c.model.mode.kind == tokens::TokenKind::Frame ? "frame-random" : "patch-random"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("mask_strategy", e.what());
  }
  c.mask_ratio = rc.get_double("mask_ratio", c.mask_ratio);
  c.span_length = rc.get_int("span_length", c.span_length);
  c.log_every = rc.get_int("log_every", c.log_every);
  c.ckpt_every = rc.get_int("ckpt_every", c.ckpt_every);
  c.overfit = rc.get_bool("overfit", false);
  c.threads = static_cast<int>(rc.get_int("threads", 1));
  rc.reject_unused();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

void FinetuneConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs", "epochs must be >= 0");
  if (batch_clips < 1) throw ConfigError("batch_clips", "batch_clips must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr", "lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay", "weight_decay must be >= 0");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0))
    throw ConfigError("heldout_fraction", "heldout_fraction must lie in (0, 1)");
  if (threads < 1) throw ConfigError("threads", "threads must be >= 1");
}

nlohmann::json to_json(const FinetuneReport& r) {
  return {{"heldout_accuracy", r.heldout_accuracy}, {"train_accuracy", r.train_accuracy},
          {"n_train", r.n_train},                   {"n_heldout", r.n_heldout},
          {"n_classes", r.n_classes},               {"degenerate", r.degenerate},
          {"final_loss", r.final_loss}};
}

namespace {

Tensor<float> pooled_features(const MaeAstModel<float>& model, std::span<const TokenBatch> clips, Index chunk) {
  nn::NoGradGuard guard;
  auto out = Tensor<float>::empty({static_cast<Index>(clips.size()), model.config().d});
  for (std::size_t b = 0; b < clips.size(); b += static_cast<std::size_t>(chunk)) {
    const std::size_t e = std::min(clips.size(), b + static_cast<std::size_t>(chunk));
    const auto pooled = model.pooled_encoding(clips.subspan(b, e - b));
    std::copy_n(pooled.value().data(), pooled.value().size(), out.row(static_cast<Index>(b)));
  }
  return out;
}

Tensor<float> select_rows(const Tensor<float>& x, std::span<const std::size_t> rows) {
  auto out = Tensor<float>::empty({static_cast<Index>(rows.size()), x.cols()});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(x.row(static_cast<Index>(rows[r])), x.cols(), out.row(r));
  return out;
}

double accuracy(const model::ClassifierHead<float>& head, const Tensor<float>& feats, std::span<const std::size_t> rows,
                std::span<const Index> labels) {
  if (rows.empty()) return 0.0;
  nn::NoGradGuard guard;
  const auto logits = head(Var<float>(select_rows(feats, rows))).value();
  Index correct = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const float* row = logits.row(static_cast<Index>(r));
    const Index pred = std::max_element(row, row + logits.cols()) - row;
    if (pred == labels[rows[r]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace

FinetuneReport finetune(MaeAstModel<float>& model, std::span<const TokenBatch> clips, std::span<const Index> labels,
                        const FinetuneConfig& cfg, model::ClassifierHead<float>* head_out) {
  cfg.validate();
  if (clips.size() != labels.size())
    throw std::invalid_argument("fine-tuning: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(clips.size()) + " clips");
  if (clips.empty()) throw std::invalid_argument("fine-tuning: no labeled clips");
  nn::set_thread_count(cfg.threads);
  Index n_classes = 0;
  for (Index l : labels) {
    if (l < 0) throw std::invalid_argument("fine-tuning: negative label");
    n_classes = std::max(n_classes, l + 1);
  }
  std::map<Index, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  FinetuneReport rep;
  rep.n_classes = n_classes;
  if (by_class.size() == 1) {
    rep.degenerate = true;
    rep.heldout_accuracy = rep.train_accuracy = 1.0;
    rep.n_train = static_cast<Index>(clips.size());
    return rep;
  }

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x73706c6974ULL));
  std::vector<std::size_t> train, held;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    Index n_held = round_count(cfg.heldout_fraction, static_cast<Index>(idx.size()));
    n_held = std::clamp<Index>(n_held, idx.size() >= 2 ? 1 : 0, static_cast<Index>(idx.size()) - 1);
    held.insert(held.end(), idx.begin(), idx.begin() + n_held);
    train.insert(train.end(), idx.begin() + n_held, idx.end());
  }
  if (held.empty()) throw std::invalid_argument("fine-tuning: too few clips for a held-out split");
  rep.n_train = static_cast<Index>(train.size());
  rep.n_heldout = static_cast<Index>(held.size());

  model::ClassifierHead<float> head(model.config().d, n_classes, mix_seed(cfg.seed, 0x68656164ULL));
  nn::AdamHyper hyper;
  hyper.weight_decay = cfg.weight_decay;
  nn::Adam<float> head_opt(head.parameters(), hyper);
  std::optional<nn::Adam<float>> model_opt;
  if (cfg.unfreeze) model_opt.emplace(model.parameters(), hyper);

  Tensor<float> feats;
  if (!cfg.unfreeze) feats = pooled_features(model, clips, cfg.batch_clips);

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (std::size_t b = 0; b < train.size(); b += static_cast<std::size_t>(cfg.batch_clips)) {
      const std::span<const std::size_t> rows(train.data() + b,
                                              std::min(train.size() - b, static_cast<std::size_t>(cfg.batch_clips)));
      std::vector<Index> y;
      for (std::size_t r : rows) y.push_back(labels[r]);
      head.parameters().zero_grad();
      Var<float> pooled;
      if (cfg.unfreeze) {
        model.parameters().zero_grad();
        std::vector<TokenBatch> batch;
        for (std::size_t r : rows) batch.push_back(clips[r]);
        pooled = model.pooled_encoding(batch);
      } else {
        pooled = Var<float>(select_rows(feats, rows));
      }
      const auto loss = nn::cross_entropy(head(pooled), y);
      rep.final_loss = loss.value()[0];
      nn::backward(loss);
      head_opt.step(cfg.lr);
      if (model_opt) model_opt->step(cfg.lr);
    }
  }
  if (cfg.unfreeze) feats = pooled_features(model, clips, cfg.batch_clips);
  rep.train_accuracy = accuracy(head, feats, train, labels);
  rep.heldout_accuracy = accuracy(head, feats, held, labels);
  if (head_out) *head_out = std::move(head);
  return rep;
}

std::vector<Index> load_labels(const fs::path& csv, std::span<const TokenBatch> clips) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot read labels file " + csv.string());
  std::map<std::string, Index> by_id;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("labels line " + std::to_string(lineno) + ": expected relative_path,label_index");
    const std::string path = line.substr(0, comma);
    Index label = 0;
    try {
      std::size_t pos = 0;
      label = std::stoll(line.substr(comma + 1), &pos);
      if (pos != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header row
      throw std::invalid_argument("labels line " + std::to_string(lineno) + ": bad label index");
    }
    if (!by_id.emplace(path, label).second)
      throw std::invalid_argument("labels file lists '" + path + "' twice");
  }
  std::vector<Index> labels;
  labels.reserve(clips.size());
  for (const auto& clip : clips) {
    const auto it = by_id.find(clip.clip_id);
    if (it == by_id.end()) throw std::invalid_argument("clip '" + clip.clip_id + "' has no label");
    labels.push_back(it->second);
  }
  if (by_id.size() != clips.size())
    throw std::invalid_argument("labels file has " + std::to_string(by_id.size()) + " rows for " +
                                std::to_string(clips.size()) + " clips");
  return labels;
}

FinetuneReport finetune(const fs::path& ckpt, const FinetuneConfig& cfg) {
  cfg.validate();
  auto loaded = model::load_model_checkpoint(ckpt);
  const Corpus corpus = load_corpus(cfg.data_dir, loaded.model.config().mode, &loaded.normalizer);
  const auto labels = load_labels(cfg.labels, corpus.clips);
  model::ClassifierHead<float> head(loaded.model.config().d, 1, 0);
  const FinetuneReport rep = finetune(loaded.model, corpus.clips, labels, cfg, &head);
  fs::create_directories(cfg.out_dir);
  if (!rep.degenerate) nn::save_parameters(head.parameters(), cfg.out_dir / "classifier");
  if (cfg.unfreeze) write_checkpoint_atomic(loaded.model, loaded.normalizer, cfg.out_dir / "encoder");
  std::ofstream(cfg.out_dir / "report.json") << to_json(rep).dump(2) << "\n";
  return rep;
}

FinetuneConfig finetune_config_from(const RunConfig& rc) {
  FinetuneConfig c;
  c.data_dir = rc.get_string("data_dir");
  c.labels = rc.get_string("labels");
  c.out_dir = rc.get_string("out_dir");
  c.epochs = rc.get_int("epochs", c.epochs);
  c.batch_clips = rc.get_int("batch_clips", c.batch_clips);
  c.lr = rc.get_double("lr", c.lr);
  c.weight_decay = rc.get_double("weight_decay", c.weight_decay);
  c.heldout_fraction = rc.get_double("heldout_fraction", c.heldout_fraction);
  c.unfreeze = rc.get_bool("unfreeze", false);
  c.seed = static_cast<std::uint64_t>(rc.get_int("seed", 0));
  c.threads = static_cast<int>(rc.get_int("threads", 1));
  rc.reject_unused();
  c.validate();
  return c;
}

}  // namespace maeast::train
