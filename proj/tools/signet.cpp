// signet: command-line front end for corpus generation, training,
// evaluation, single-pair verification and activation export.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <thread>

#include "signet/signet.hpp"

namespace fs = std::filesystem;
using namespace signet;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  std::string arch;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
};

struct GenSynthArgs {
  CorpusSpec spec;
};

struct TrainArgs {
  std::string dataset;
  std::string resume;
  std::string pairing = "skilled";
  std::size_t epochs = 20;
  std::size_t batch = 128;
  double lr = 1e-4;
  double rho = 0.9;
  double eps = 1e-8;
  double weight_decay = 5e-4;
  std::vector<std::size_t> lr_decay_epochs{10};
  double lr_decay_factor = 0.1;
  double alpha = 0.5;
  double beta = 0.5;
  double margin = 1.0;
  std::size_t train_writers = 0;
  std::optional<std::uint64_t> split_seed;
  bool validate = false;
  double step = 0.01;
};

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  double step = 0.01;
  std::size_t train_writers = 0;
  std::optional<std::uint64_t> split_seed;
  bool all_writers = false;
};

struct CrossEvalArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> datasets;
  double step = 0.01;
  std::size_t train_writers = 0;
  std::optional<std::uint64_t> split_seed;
};

struct VerifyArgs {
  std::string checkpoint;
  std::string image_a;
  std::string image_b;
  double threshold = 0.5;
};

struct InspectArgs {
  std::string checkpoint;
  std::string image;
  long layer = -1;
  std::size_t top_k = 5;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_default, bool arch_from_checkpoint) {
  cmd->add_option("--config", c.config, "key = value file; command-line flags override it");
  cmd->add_option("--seed", c.seed, "Random seed");
  c.out = out_default;
  cmd->add_option("--out", c.out, "Output directory");
  c.arch = arch_from_checkpoint ? "" : "full";
  cmd->add_option("--arch", c.arch,
                  arch_from_checkpoint ? "Expected architecture preset (full|tiny); empty accepts the checkpoint's"
                                       : "Architecture preset (full|tiny)")
      ->check(CLI::IsMember({"", "full", "tiny"}));
  cmd->add_option("--threads", c.threads, "Worker thread cap")->check(CLI::PositiveNumber);
}

void add_split_options(CLI::App* cmd, std::size_t& train_writers, std::optional<std::uint64_t>& split_seed) {
  cmd->add_option("--train-writers", train_writers,
                  "Training writers M out of K (0: K - ceil(K/4), or the checkpoint's value)");
  cmd->add_option("--split-seed", split_seed, "Seed of the writer split and pair sampling (default: --seed)");
}

std::size_t default_train_writers(std::size_t k) { return k - (k + 3) / 4; }

double meta_double(const Checkpoint& ck, const std::string& key) {
  return parse_double(require_key(ck.meta, key), key);
}

std::uint64_t meta_uint(const Checkpoint& ck, const std::string& key) {
  return parse_uint(require_key(ck.meta, key), key);
}

Checkpoint load_for_inference(const std::string& path, const std::string& arch) {
  auto ck = load_checkpoint(path);
  if (!arch.empty()) {
    try {
      check_compatible(ArchitectureConfig::preset(arch), ck);
    } catch (const Error& e) {
      fail(path, ": ", e.what());
    }
  }
  return ck;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail("cannot create output directory '", dir.string(), "'");
}

// ---------------------------------------------------------------------------

int run_gen_synth(const Common& c, GenSynthArgs a) {
  a.spec.seed = c.seed;
  const auto summary = gen_corpus(a.spec, c.out);
  std::cout << "corpus=" << c.out << "\n"
            << "writers=" << a.spec.num_writers << "\n"
            << "files=" << summary.files << "\n"
            << "written=" << summary.written << "\n";
  if (summary.written == 0) std::cout << "unchanged\n";
  return 0;
}

int run_train(const Common& c, const TrainArgs& a) {
  const auto index = load_dataset(a.dataset);
  std::optional<Checkpoint> resumed;
  std::size_t start_epoch = 0;
  ArchitectureConfig arch;
  SplitSpec split;
  PairingMode pairing = pairing_mode_from(a.pairing);
  std::uint64_t seed = c.seed;
  ContrastiveLossParams loss{a.alpha, a.beta, a.margin};
  std::size_t batch = a.batch;
  std::vector<std::size_t> decay_epochs = a.lr_decay_epochs;
  double decay_factor = a.lr_decay_factor;

  if (!a.resume.empty()) {
    // A resumed run keeps the recorded architecture and run settings; only the
    // epoch target is new.
    resumed = load_checkpoint(a.resume);
    const auto& ck = *resumed;
    arch = ck.config;
    start_epoch = meta_uint(ck, "epoch");
    split = {meta_uint(ck, "split.K"), meta_uint(ck, "split.M"), meta_uint(ck, "split.seed")};
    pairing = pairing_mode_from(require_key(ck.meta, "pairing"));
    seed = meta_uint(ck, "train.seed");
    loss = {meta_double(ck, "loss.alpha"), meta_double(ck, "loss.beta"), meta_double(ck, "loss.margin")};
    batch = meta_uint(ck, "train.batch_size");
    decay_factor = meta_double(ck, "train.lr_decay_factor");
    decay_epochs.clear();
    std::stringstream ss(require_key(ck.meta, "train.lr_decay_epochs"));
    for (std::string tok; std::getline(ss, tok, ',');) {
      if (!trim(tok).empty()) decay_epochs.push_back(parse_uint(trim(tok), "train.lr_decay_epochs"));
    }
    if (a.epochs <= start_epoch) {
      fail("--epochs ", a.epochs, " is the total epoch target; checkpoint already completed ", start_epoch);
    }
  } else {
    arch = ArchitectureConfig::preset(c.arch.empty() ? "full" : c.arch);
    const std::size_t k = index.writers.size();
    split = {k, a.train_writers ? a.train_writers : default_train_writers(k), a.split_seed.value_or(seed)};
  }

  const auto protocol = build_protocol(index, split, pairing);
  double input_std = 0;
  if (resumed) {
    input_std = meta_double(*resumed, "data.std");
  } else {
    input_std = dataset_std(index, protocol.split.train, arch.input_height, arch.input_width);
  }
  const auto images = preprocess_all(index, arch.input_height, arch.input_width, input_std);

  Model<float> model = resumed ? model_from_checkpoint<float>(*resumed)
                               : build_signet<float>(arch, derive_seed(seed, "init"));
  RmspropState<float> opt;
  opt.learning_rate = a.lr;
  opt.rho = a.rho;
  opt.epsilon = a.eps;
  opt.weight_decay = a.weight_decay;
  if (resumed) opt = optimizer_from_checkpoint<float>(*resumed, opt);

  const fs::path out = c.out;
  ensure_dir(out);
  write_file_atomic(out / "train_pairs.tsv", format_pair_manifest(index, protocol.train));
  write_file_atomic(out / "test_pairs.tsv", format_pair_manifest(index, protocol.test));

  std::string decay_list;
  for (auto e : decay_epochs) decay_list += (decay_list.empty() ? "" : ",") + std::to_string(e);
  TrainConfig tc;
  tc.epochs = a.epochs - start_epoch;
  tc.batch_size = batch;
  tc.seed = seed;
  tc.lr_decay_epochs = decay_epochs;
  tc.lr_decay_factor = decay_factor;
  tc.start_epoch = start_epoch;
  tc.checkpoint_dir = out;
  tc.checkpoint_meta = {
      {"data.name", index.name},
      {"data.std", format_double(input_std)},
      {"split.K", std::to_string(split.total_writers)},
      {"split.M", std::to_string(split.training_writers)},
      {"split.seed", std::to_string(split.seed)},
      {"pairing", std::string(to_string(pairing))},
      {"loss.alpha", format_double(loss.alpha)},
      {"loss.beta", format_double(loss.beta)},
      {"loss.margin", format_double(loss.margin)},
      {"train.batch_size", std::to_string(batch)},
      {"train.lr_decay_epochs", decay_list},
      {"train.lr_decay_factor", format_double(decay_factor)},
  };

  EpochValidator validator;
  if (a.validate) {
    validator = [&](std::size_t) {
      return threshold_sweep(compute_distances(model, protocol.test, images), a.step).accuracy;
    };
  }
  std::cerr << "training " << arch.name << " on " << protocol.train.size() << " pairs from "
            << protocol.split.train.size() << " writers, epochs " << start_epoch + 1 << ".." << a.epochs << "\n";
  const auto history = train(model, protocol.train, images, tc, loss, opt, validator);

  std::string lines;
  if (!resumed) lines = "epoch\tloss\tvalidation_accuracy\n";
  for (std::size_t i = 0; i < history.epoch_loss.size(); ++i) {
    const auto& v = history.validation_accuracy[i];
    lines += std::to_string(start_epoch + i + 1) + "\t" + format_double(history.epoch_loss[i]) + "\t" +
             (v ? format_double(*v) : std::string("-")) + "\n";
    std::cerr << "epoch " << start_epoch + i + 1 << " loss " << history.epoch_loss[i] << " elapsed "
              << history.wall_seconds[i] << "s\n";
  }
  const auto history_path = out / "history.tsv";
  if (resumed && fs::exists(history_path)) lines = read_file(history_path) + lines;
  write_file_atomic(history_path, lines);

  std::cout << "epochs_completed=" << a.epochs << "\n"
            << "final_loss=" << format_double(history.epoch_loss.back()) << "\n"
            << "checkpoint=" << (out / "latest.sgnt").string() << "\n";
  return 0;
}

struct Evaluable {
  Model<float> model;
  double input_std;
  Checkpoint ck;
};

Evaluable open_model(const std::string& path, const std::string& arch) {
  auto ck = load_for_inference(path, arch);
  auto model = model_from_checkpoint<float>(ck);
  const double sd = meta_double(ck, "data.std");
  return {std::move(model), sd, std::move(ck)};
}

// Held-out writers of `index` under the given (or recorded) split; all
// writers when requested.
std::vector<PairSample> test_pairs(const DatasetIndex& index, const Checkpoint* ck, std::size_t train_writers,
                                   std::optional<std::uint64_t> split_seed, std::uint64_t seed, bool all_writers) {
  const std::size_t k = index.writers.size();
  if (all_writers) {
    std::vector<PairSample> out;
    const std::uint64_t s = split_seed.value_or(seed);
    for (const auto& id : index.writer_ids()) {
      auto p = generate_pairs(index, id, PairingMode::skilled, s);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }
  SplitSpec split{k, train_writers, split_seed.value_or(seed)};
  if (ck) {
    if (!split_seed) split.seed = meta_uint(*ck, "split.seed");
    if (train_writers == 0 && meta_uint(*ck, "split.K") == k) split.training_writers = meta_uint(*ck, "split.M");
  }
  if (split.training_writers == 0) split.training_writers = default_train_writers(k);
  const auto protocol = build_protocol(index, split, PairingMode::skilled);
  if (protocol.test.empty()) fail("dataset '", index.name, "': empty test split");
  return protocol.test;
}

int run_eval(const Common& c, const EvalArgs& a) {
  auto m = open_model(a.checkpoint, c.arch);
  const auto index = load_dataset(a.dataset);
  const auto pairs = test_pairs(index, &m.ck, a.train_writers, a.split_seed, c.seed, a.all_writers);
  const auto& cfg = m.model.config();
  const auto images = preprocess_all(index, cfg.input_height, cfg.input_width, m.input_std);
  const auto report = threshold_sweep(compute_distances(m.model, pairs, images), a.step);
  const auto text = format_report(report);
  std::cout << text;
  const fs::path out = c.out;
  ensure_dir(out);
  write_file_atomic(out / "report.txt", text);
  write_file_atomic(out / "sweep.tsv", format_sweep_curve(report));
  return 0;
}

int run_cross_eval(const Common& c, const CrossEvalArgs& a) {
  std::vector<Evaluable> models;
  std::vector<NamedModel> named;
  models.reserve(a.checkpoints.size());
  for (const auto& path : a.checkpoints) {
    models.push_back(open_model(path, c.arch));
    auto it = models.back().ck.meta.find("data.name");
    named.push_back({it != models.back().ck.meta.end() ? it->second : fs::path(path).stem().string(),
                     &models.back().model, models.back().input_std});
  }
  std::vector<DatasetIndex> indices;
  indices.reserve(a.datasets.size());
  std::vector<NamedTestSet> tests;
  for (const auto& path : a.datasets) {
    NamedTestSet t;
    t.name = fs::path(path).filename().string();
    if (t.name.empty()) t.name = fs::path(path).parent_path().filename().string();
    try {
      indices.push_back(load_dataset(path));
      t.index = &indices.back();
      t.pairs = test_pairs(indices.back(), nullptr, a.train_writers, a.split_seed, c.seed, false);
    } catch (const std::exception& e) {
      t.error = e.what();
      std::cerr << "dataset " << path << ": " << e.what() << "\n";
    }
    tests.push_back(std::move(t));
  }
  const auto matrix = cross_dataset_matrix(named, tests, a.step);
  for (std::size_t r = 0; r < matrix.rows.size(); ++r) {
    for (std::size_t col = 0; col < matrix.cols.size(); ++col) {
      if (!matrix.errors[r][col].empty()) {
        std::cerr << matrix.rows[r] << " on " << matrix.cols[col] << ": " << matrix.errors[r][col] << "\n";
      }
    }
  }
  const auto text = format_matrix(matrix);
  std::cout << text;
  const fs::path out = c.out;
  ensure_dir(out);
  write_file_atomic(out / "cross_matrix.tsv", text);
  return 0;
}

Tensor<float> load_single(const std::string& path, const Evaluable& m) {
  const auto& cfg = m.model.config();
  return preprocess(read_image(path), cfg.input_height, cfg.input_width, m.input_std)
      .reshaped({1, 1, cfg.input_height, cfg.input_width});
}

int run_verify(const Common& c, const VerifyArgs& a) {
  const auto m = open_model(a.checkpoint, c.arch);
  const auto ea = embed(m.model, load_single(a.image_a, m), Mode::infer);
  const auto eb = embed(m.model, load_single(a.image_b, m), Mode::infer);
  const double d = pair_distance(ea, eb).item();
  const bool accept = d <= a.threshold;
  std::cout << "distance=" << format_double(d) << "\n"
            << "threshold=" << format_double(a.threshold) << "\n"
            << "decision=" << (accept ? "ACCEPT" : "REJECT") << "\n";
  return accept ? 0 : 2;
}

int run_inspect(const Common& c, const InspectArgs& a) {
  const auto m = open_model(a.checkpoint, c.arch);
  const auto& cfg = m.model.config();
  const std::size_t layer = a.layer < 0 ? last_conv_layer(cfg) : static_cast<std::size_t>(a.layer);
  const auto maps = activation_maps(m.model, load_single(a.image, m), layer);
  const std::size_t k = std::min(a.top_k, maps.ranking.size());
  const fs::path out = c.out;
  ensure_dir(out);
  std::cout << "layer=" << layer << "\n";
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t ch = maps.ranking[r];
    const auto& v = maps.maps[ch];
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    GrayImage img(maps.height, maps.width, 0);
    if (*hi > *lo) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (v[i] - *lo) / (*hi - *lo)));
      }
    }
    char name[64];
    std::snprintf(name, sizeof name, "rank%02zu_channel%03zu.pgm", r + 1, ch);
    write_file_atomic(out / name, encode_pgm(img));
    std::cout << name << "\tenergy=" << format_double(maps.energy[ch]) << "\n";
  }
  return 0;
}

// Turns a key = value config file into --key=value arguments placed before
// the real ones, so explicit flags win (options keep their last value).
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  std::string path;
  std::size_t sub_pos = args.size();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (sub_pos == args.size() && !args[i].empty() && args[i][0] != '-') sub_pos = i;
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || sub_pos == args.size()) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[sub_pos]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  KeyValues kv;
  try {
    kv = parse_key_values(read_file(path));
  } catch (const Error& e) {
    fail("config ", path, ": ", e.what());
  }
  std::vector<std::string> injected;
  for (const auto& [key, value] : kv) {
    if (key == "config" || !sub->get_option_no_throw("--" + key)) {
      fail("config ", path, ": unknown key '", key, "' for command '", args[sub_pos], "'");
    }
    injected.push_back("--" + key + "=" + value);
  }
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1));
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1), args.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Writer-independent offline signature verification with a convolutional Siamese network"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  Common common;
  GenSynthArgs gen;
  TrainArgs tr;
  EvalArgs ev;
  CrossEvalArgs cx;
  VerifyArgs vf;
  InspectArgs in;

  auto* g = app.add_subcommand("gen-synth", "Generate a synthetic signature corpus");
  add_common(g, common, "synth_corpus", false);
  g->add_option("--writers", gen.spec.num_writers, "Number of writers")->check(CLI::PositiveNumber);
  g->add_option("--genuine", gen.spec.genuine_per_writer, "Genuine samples per writer")->check(CLI::Range(2, 10000));
  g->add_option("--forged", gen.spec.forged_per_writer, "Forged samples per writer");
  g->add_option("--height", gen.spec.height, "Image height in pixels")->check(CLI::Range(32, 4096));
  g->add_option("--width", gen.spec.width, "Image width in pixels")->check(CLI::Range(32, 4096));
  g->add_option("--genuine-jitter", gen.spec.genuine_jitter, "Control-point jitter of genuine samples");
  g->add_option("--forgery-amplitude", gen.spec.forgery_amplitude, "Control-point perturbation of forgeries");
  g->add_option("--forgery-pen-scale", gen.spec.forgery_pen_scale, "Pen width of forgeries relative to the writer's")
      ->check(CLI::PositiveNumber);
  g->add_option("--min-strokes", gen.spec.style.min_strokes, "Fewest strokes per writer");
  g->add_option("--max-strokes", gen.spec.style.max_strokes, "Most strokes per writer");
  g->add_option("--min-segments", gen.spec.style.min_segments, "Fewest Bezier segments per stroke");
  g->add_option("--max-segments", gen.spec.style.max_segments, "Most Bezier segments per stroke");
  g->add_option("--min-pen-width", gen.spec.style.min_width, "Thinnest pen width (fraction of height)");
  g->add_option("--max-pen-width", gen.spec.style.max_width, "Thickest pen width (fraction of height)");
  g->add_option("--max-slant", gen.spec.style.max_slant, "Largest writer slant (shear)");
  g->add_option("--vertical-spread", gen.spec.style.vertical_spread, "Vertical wander of strokes");
  g->add_option("--width-jitter", gen.spec.style.width_jitter, "Relative per-sample pen width noise");
  g->add_option("--shift-jitter", gen.spec.style.shift_jitter, "Per-sample translation noise");

  auto* t = app.add_subcommand("train", "Train on a dataset's training writers");
  add_common(t, common, "signet_run", false);
  t->add_option("--dataset", tr.dataset, "Dataset root (<writer>/genuine, <writer>/forged)")->required();
  t->add_option("--resume", tr.resume, "Checkpoint to continue from (epoch numbering continues)");
  t->add_option("--pairing", tr.pairing, "Dissimilar training pairs")->check(CLI::IsMember({"skilled", "unskilled"}));
  t->add_option("--epochs", tr.epochs, "Total epochs")->check(CLI::PositiveNumber);
  t->add_option("--batch", tr.batch, "Mini-batch size in pairs")->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.lr, "RMSprop learning rate")->check(CLI::PositiveNumber);
  t->add_option("--rho", tr.rho, "RMSprop decay rate")->check(CLI::Range(0.0, 1.0));
  t->add_option("--eps", tr.eps, "RMSprop epsilon")->check(CLI::PositiveNumber);
  t->add_option("--weight-decay", tr.weight_decay, "L2 weight decay")->check(CLI::NonNegativeNumber);
  t->add_option("--lr-decay-epochs", tr.lr_decay_epochs, "Epochs after which LR is multiplied by the decay factor")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->expected(0, -1);
  t->add_option("--lr-decay-factor", tr.lr_decay_factor, "LR multiplier at each decay epoch");
  t->add_option("--alpha", tr.alpha, "Contrastive loss weight of similar pairs")->check(CLI::PositiveNumber);
  t->add_option("--beta", tr.beta, "Contrastive loss weight of dissimilar pairs")->check(CLI::PositiveNumber);
  t->add_option("--margin", tr.margin, "Contrastive loss margin")->check(CLI::PositiveNumber);
  add_split_options(t, tr.train_writers, tr.split_seed);
  t->add_flag("--validate", tr.validate, "Evaluate the held-out writers after every epoch");
  t->add_option("--step", tr.step, "Threshold sweep step for --validate")->check(CLI::PositiveNumber);

  auto* e = app.add_subcommand("eval", "Threshold-sweep evaluation on held-out writers");
  add_common(e, common, "signet_eval", true);
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--dataset", ev.dataset, "Dataset root")->required();
  e->add_option("--step", ev.step, "Threshold sweep step")->check(CLI::PositiveNumber);
  add_split_options(e, ev.train_writers, ev.split_seed);
  e->add_flag("--all-writers", ev.all_writers, "Evaluate every writer of the dataset");

  auto* x = app.add_subcommand("cross-eval", "Accuracy matrix of models (rows) against datasets (columns)");
  add_common(x, common, "signet_cross", true);
  x->add_option("--checkpoint", cx.checkpoints, "Checkpoint file (repeatable)")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  x->add_option("--dataset", cx.datasets, "Dataset root (repeatable)")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  x->add_option("--step", cx.step, "Threshold sweep step")->check(CLI::PositiveNumber);
  add_split_options(x, cx.train_writers, cx.split_seed);

  auto* v = app.add_subcommand("verify", "Accept or reject one pair of signature images");
  add_common(v, common, ".", true);
  v->add_option("--checkpoint", vf.checkpoint, "Checkpoint file")->required();
  v->add_option("image_a", vf.image_a, "Reference signature")->required();
  v->add_option("image_b", vf.image_b, "Questioned signature")->required();
  v->add_option("--threshold,-d", vf.threshold, "Accept when the distance is at most this");

  auto* s = app.add_subcommand("inspect", "Export the highest-energy activation maps of a conv layer");
  add_common(s, common, "activations", true);
  s->add_option("--checkpoint", in.checkpoint, "Checkpoint file")->required();
  s->add_option("image", in.image, "Signature image")->required();
  s->add_option("--layer", in.layer, "Layer index (negative: last conv layer)");
  s->add_option("--top-k", in.top_k, "Number of maps to write")->check(CLI::PositiveNumber);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(args, app);
    std::vector<char*> ptrs{argv[0]};
    for (auto& a : args) ptrs.push_back(a.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }

  try {
    set_num_threads(common.threads);
    if (*g) return run_gen_synth(common, gen);
    if (*t) return run_train(common, tr);
    if (*e) return run_eval(common, ev);
    if (*x) return run_cross_eval(common, cx);
    if (*v) return run_verify(common, vf);
    if (*s) return run_inspect(common, in);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
