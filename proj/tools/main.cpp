// Command-line driver for the registration pipeline: data generation,
// three-phase training, conversion, evaluation, energy accounting, and
// paired statistics. Exit codes: 0 success, 1 user error, 2 internal error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "spikewarp/checkpoint.hpp"
#include "spikewarp/config.hpp"
#include "spikewarp/conversion.hpp"
#include "spikewarp/energy.hpp"
#include "spikewarp/metrics.hpp"
#include "spikewarp/stats.hpp"
#include "spikewarp/synthetic.hpp"
#include "spikewarp/trainer.hpp"
#include "spikewarp/volume_io.hpp"

namespace fs = std::filesystem;
using namespace spikewarp;

namespace {

// A distinct type so user mistakes (bad paths, bad configs) exit 1 while
// genuine bugs exit 2.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Tensor<double> load_volume(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".nii") return read_nifti1(path).data;
  return read_native(path).data;
}

void write_field(const std::string& base, const Tensor<double>& field) {
  Dims4 f = Dims4::of(field.shape);
  const char* axis[3] = {"z", "y", "x"};
  for (int c = 0; c < 3; ++c) {
    Tensor<double> ch(Shape{1, f.d, f.h, f.w});
    std::copy(field.data.begin() + c * f.spatial(), field.data.begin() + (c + 1) * f.spatial(),
              ch.data.begin());
    write_native(base + "." + axis[c], ch);
  }
}

Tensor<double> read_field(const std::string& base) {
  const char* axis[3] = {"z", "y", "x"};
  Tensor<double> field;
  for (int c = 0; c < 3; ++c) {
    auto ch = read_native(base + "." + axis[c]).data;
    Dims4 d = Dims4::of(ch.shape);
    if (c == 0) field = Tensor<double>(Shape{3, d.d, d.h, d.w});
    std::copy(ch.data.begin(), ch.data.end(), field.data.begin() + c * Dims4::of(field.shape).spatial());
  }
  return field;
}

struct Dataset {
  std::vector<std::string> ids;
  fs::path dir;

  TrainPair<double> load(const std::string& id) const {
    TrainPair<double> p;
    p.fixed = read_native((dir / (id + ".fixed")).string()).data;
    p.moving = read_native((dir / (id + ".moving")).string()).data;
    p.fixed_labels = read_native((dir / (id + ".fixed_labels")).string()).data;
    p.moving_labels = read_native((dir / (id + ".moving_labels")).string()).data;
    return p;
  }
  Tensor<double> gt_field(const std::string& id) const {
    return read_field((dir / (id + ".gtfield")).string());
  }
};

Dataset open_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  std::ifstream manifest(ds.dir / "manifest.txt");
  if (!manifest) throw UserError("no manifest.txt in " + dir + " (run gen-data first?)");
  std::string id;
  while (std::getline(manifest, id))
    if (!id.empty()) ds.ids.push_back(id);
  if (ds.ids.empty()) throw UserError("empty dataset manifest in " + dir);
  return ds;
}

std::vector<TrainPair<double>> load_all(const Dataset& ds) {
  std::vector<TrainPair<double>> out;
  for (const auto& id : ds.ids) out.push_back(ds.load(id));
  return out;
}

std::uint64_t config_hash(const Config& cfg) {
  std::string s;
  for (const auto& [k, v] : cfg.entries()) s += k + "=" + v + ";";
  return std::hash<std::string>{}(s);
}

// Provenance header for every report: which config and seed produced it.
std::string provenance(const Config& cfg, std::uint64_t seed) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash(cfg) << " seed=" << seed << "\n";
  return os.str();
}

NetworkSpec spec_from_config(const Config& cfg) {
  NetworkSpec s;
  s.encoder_channels = cfg.get_i64_list("network", "encoder_channels", {8, 16, 32, 64});
  s.decoder_channels = cfg.get_i64_list("network", "decoder_channels", {32, 16, 8, 8});
  s.timesteps = cfg.get_i64("network", "timesteps", 4);
  s.smoothing_kernel = cfg.get_i64("network", "smoothing_kernel", 3);
  s.velocity_mode = cfg.get_bool("network", "velocity_mode", false);
  s.surrogate_alpha = cfg.get_f64("network", "surrogate_alpha", 10.0);
  return s;
}

LossWeights weights_from_config(const Config& cfg) {
  LossWeights w;
  w.lambda_sim = cfg.get_f64("loss", "lambda_sim", 1.0);
  w.lambda_reg = cfg.get_f64("loss", "lambda_reg", 0.1);
  w.lambda_spk = cfg.get_f64("loss", "lambda_spk", 1e-4);
  w.beta = cfg.get_f64("loss", "beta", 1e-2);
  w.rho_star = cfg.get_f64("loss", "rho_star", 0.1);
  w.lambda_distill = cfg.get_f64("loss", "lambda_distill", 0.0);
  w.lambda_seg = cfg.get_f64("loss", "lambda_seg", 0.0);
  w.ncc_window = cfg.get_i64("loss", "ncc_window", 5);
  return w;
}

OptimConfig optim_from_config(const Config& cfg) {
  OptimConfig o;
  o.lr = cfg.get_f64("train", "lr", 1e-3);
  o.eta_min = cfg.get_f64("train", "eta_min", 1e-6);
  o.epochs = cfg.get_i64("train", "epochs", 10);
  o.clip_norm = cfg.get_f64("train", "clip_norm", 1.0);
  o.seed = static_cast<std::uint64_t>(cfg.get_i64("train", "seed", 42));
  return o;
}

Network<double> load_net(const std::string& path, CheckpointMeta* meta = nullptr) {
  if (!fs::exists(path)) throw UserError("missing checkpoint " + path);
  return load_checkpoint<double>(path, meta);
}

std::vector<double> read_thetas(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open thresholds file " + path);
  std::vector<double> t;
  double v;
  while (is >> v) t.push_back(v);
  if (t.empty()) throw UserError("no thresholds in " + path);
  return t;
}

PairResult evaluate_one(Network<double>& net, const TrainPair<double>& pr, const std::string& id,
                        std::int64_t ncc_window) {
  Tape<double> tape;
  auto res = forward(net, tape, pr.fixed, pr.moving);
  return evaluate_pair(id, pr.fixed, pr.moving, pr.fixed_labels, pr.moving_labels,
                       tape.value(res.field), ncc_window, 1e-8, res.rates);
}

std::map<std::string, double> read_metric_column(const std::string& path,
                                                 const std::string& metric) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open " + path);
  std::string line;
  std::vector<std::string> cols;
  std::map<std::string, double> out;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) fields.push_back(tok);
    if (cols.empty()) {
      cols = fields;
      continue;
    }
    std::size_t ci = cols.size();
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == metric) ci = i;
    if (ci >= cols.size()) throw UserError("no column '" + metric + "' in " + path);
    if (fields[0] == "mean") continue;  // aggregate row is not a pair
    out[fields[0]] = std::stod(fields[ci]);
  }
  if (out.empty()) throw UserError("no data rows in " + path);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking image registration pipeline"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt_path, log_path;

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic pair dataset");
  std::int64_t g_shape = 32, g_pairs = 8, g_classes = 4;
  std::uint64_t g_seed = 42;
  double g_amp = 3.0, g_smooth = 1.5;
  gen->add_option("--out", data_dir, "output directory")->required();
  gen->add_option("--shape", g_shape, "cubic volume side");
  gen->add_option("--pairs", g_pairs, "number of pairs");
  gen->add_option("--classes", g_classes, "labeled regions per phantom");
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--amplitude", g_amp, "max velocity component, voxels");
  gen->add_option("--smoothness", g_smooth, "gaussian sigma of the velocity");
  gen->callback([&] {
    fs::create_directories(data_dir);
    std::ofstream manifest(fs::path(data_dir) / "manifest.txt");
    nlohmann::json meta{{"shape", g_shape}, {"pairs", g_pairs},     {"classes", g_classes},
                        {"seed", g_seed},   {"amplitude", g_amp},   {"smoothness", g_smooth}};
    for (std::int64_t i = 0; i < g_pairs; ++i) {
      SyntheticConfig sc;
      sc.dim = g_shape;
      sc.classes = g_classes;
      sc.amplitude = g_amp;
      sc.smoothness = g_smooth;
      sc.seed = g_seed + static_cast<std::uint64_t>(i);
      auto p = generate_pair<double>(sc);
      std::ostringstream id;
      id << "pair" << std::setw(3) << std::setfill('0') << i;
      const auto base = (fs::path(data_dir) / id.str()).string();
      write_native(base + ".fixed", p.fixed);
      write_native(base + ".moving", p.moving);
      write_native(base + ".fixed_labels", p.fixed_labels);
      write_native(base + ".moving_labels", p.moving_labels);
      write_field(base + ".gtfield", p.displacement);
      manifest << id.str() << "\n";
      if (p.retries > 0)
        std::cerr << id.str() << ": amplitude halved " << p.retries << "x to avoid folding\n";
    }
    std::ofstream(fs::path(data_dir) / "meta.json") << meta.dump(2) << "\n";
    std::cout << "gen-data: wrote " << g_pairs << " pairs to " << data_dir << "\n";
  });

  // shared training flags
  auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (flags override)");
    cmd->add_option("--data", data_dir, "dataset directory")->required();
    cmd->add_option("--out", out_path, "output checkpoint")->required();
    cmd->add_option("--log", log_path, "step log (jsonl), default <out>.log.jsonl");
  };
  std::int64_t f_epochs = -1;
  double f_lr = -1;
  std::int64_t f_seed = -1, f_timesteps = -1;

  auto effective_config = [&]() {
    Config cfg = config_path.empty() ? Config() : Config::from_file(config_path);
    return cfg;
  };
  auto apply_overrides = [&](OptimConfig& o) {
    if (f_epochs > 0) o.epochs = f_epochs;
    if (f_lr > 0) o.lr = f_lr;
    if (f_seed >= 0) o.seed = static_cast<std::uint64_t>(f_seed);
  };

  // ---- train-ann ----
  auto* tann = app.add_subcommand("train-ann", "train the analog teacher from scratch");
  add_train_flags(tann);
  tann->add_option("--epochs", f_epochs, "override epochs");
  tann->add_option("--lr", f_lr, "override learning rate");
  tann->add_option("--seed", f_seed, "override seed");
  tann->callback([&] {
    auto cfg = effective_config();
    auto ds = open_dataset(data_dir);
    auto spec = spec_from_config(cfg);
    auto optim = optim_from_config(cfg);
    apply_overrides(optim);
    std::mt19937_64 rng(optim.seed);
    auto net = build_network<double>(spec, Flavor::ann, rng);
    net.bn_training = true;
    auto data = load_all(ds);
    PhasePlan<double> plan;
    plan.phase = Phase::ann_warmstart;
    plan.weights = weights_from_config(cfg);
    plan.optim = optim;
    cfg.reject_unknown();
    std::ofstream log(log_path.empty() ? out_path + ".log.jsonl" : log_path);
    log << provenance(cfg, optim.seed);
    run_phase(net, data, plan, &log);
    save_checkpoint(net, out_path, phase_name(plan.phase), optim.seed);
    std::cout << "train-ann: " << data.size() << " pairs x " << optim.epochs << " epochs -> "
              << out_path << "\n";
  });

  // ---- calibrate ----
  auto* cal = app.add_subcommand("calibrate", "record teacher activations, pick thresholds");
  double c_pct = 50.0;
  std::string thetas_path;
  cal->add_option("--data", data_dir, "dataset directory")->required();
  cal->add_option("--ckpt", ckpt_path, "analog teacher checkpoint")->required();
  cal->add_option("--percentile", c_pct, "threshold percentile");
  cal->add_option("--out", out_path, "calibration report csv")->required();
  cal->add_option("--thetas", thetas_path, "thresholds output, default <out>.thetas.txt");
  cal->callback([&] {
    auto net = load_net(ckpt_path);
    auto ds = open_dataset(data_dir);
    std::vector<std::pair<Tensor<double>, Tensor<double>>> pairs;
    for (const auto& id : ds.ids) {
      auto p = ds.load(id);
      pairs.emplace_back(std::move(p.fixed), std::move(p.moving));
    }
    auto calset = record_activations(net, pairs);
    auto thetas = calibrate_thresholds(calset, c_pct);
    std::ofstream(out_path) << calibration_report(calset, thetas);
    const std::string tp = thetas_path.empty() ? out_path + ".thetas.txt" : thetas_path;
    std::ofstream ts(tp);
    ts.precision(17);
    for (double t : thetas) ts << t << "\n";
    std::cout << "calibrate: p=" << c_pct << " over " << pairs.size() << " pairs -> " << tp
              << "\n";
  });

  // ---- convert ----
  auto* conv = app.add_subcommand("convert", "build the spiking student from the teacher");
  conv->add_option("--ckpt", ckpt_path, "analog teacher checkpoint")->required();
  conv->add_option("--thetas", thetas_path, "thresholds file from calibrate")->required();
  conv->add_option("--timesteps", f_timesteps, "spiking timesteps")->default_val(4);
  conv->add_option("--out", out_path, "student checkpoint")->required();
  conv->callback([&] {
    auto teacher = load_net(ckpt_path);
    auto thetas = read_thetas(thetas_path);
    auto student = transfer_weights(teacher, thetas, f_timesteps);
    save_checkpoint(student, out_path, "convert", 0);
    std::cout << "convert: T=" << f_timesteps << " -> " << out_path << "\n";
  });

  // ---- finetune ----
  auto* ft = app.add_subcommand("finetune", "fine-tune a converted spiking network");
  std::string teacher_path;
  add_train_flags(ft);
  ft->add_option("--ckpt", ckpt_path, "converted student checkpoint")->required();
  ft->add_option("--teacher", teacher_path, "analog teacher for distillation");
  ft->add_option("--epochs", f_epochs, "override epochs");
  ft->add_option("--lr", f_lr, "override learning rate");
  ft->add_option("--seed", f_seed, "override seed");
  ft->callback([&] {
    auto cfg = effective_config();
    auto ds = open_dataset(data_dir);
    auto net = load_net(ckpt_path);
    Network<double> teacher;
    Network<double>* teacher_ptr = nullptr;
    if (!teacher_path.empty()) {
      teacher = load_net(teacher_path);
      teacher_ptr = &teacher;
    }
    auto data = load_all(ds);
    PhasePlan<double> plan;
    plan.phase = Phase::snn_finetune;
    plan.weights = weights_from_config(cfg);
    plan.optim = optim_from_config(cfg);
    apply_overrides(plan.optim);
    plan.distill_teacher = teacher_ptr;
    if (teacher_ptr && plan.weights.lambda_distill == 0.0) plan.weights.lambda_distill = 0.1;
    if (!teacher_ptr) plan.weights.lambda_distill = 0.0;
    cfg.reject_unknown();
    std::ofstream log(log_path.empty() ? out_path + ".log.jsonl" : log_path);
    log << provenance(cfg, plan.optim.seed);
    run_phase(net, data, plan, &log);
    save_checkpoint(net, out_path, phase_name(plan.phase), plan.optim.seed);
    std::cout << "finetune: " << data.size() << " pairs x " << plan.optim.epochs << " epochs -> "
              << out_path << "\n";
  });

  // ---- train-scratch ----
  auto* scr = app.add_subcommand("train-scratch", "train a spiking network from scratch");
  add_train_flags(scr);
  scr->add_option("--epochs", f_epochs, "override epochs");
  scr->add_option("--lr", f_lr, "override learning rate");
  scr->add_option("--seed", f_seed, "override seed");
  scr->add_option("--timesteps", f_timesteps, "spiking timesteps");
  scr->callback([&] {
    auto cfg = effective_config();
    auto ds = open_dataset(data_dir);
    auto spec = spec_from_config(cfg);
    if (f_timesteps > 0) spec.timesteps = f_timesteps;
    auto optim = optim_from_config(cfg);
    apply_overrides(optim);
    std::mt19937_64 rng(optim.seed);
    auto net = build_network<double>(spec, Flavor::snn, rng);
    auto data = load_all(ds);
    PhasePlan<double> plan;
    plan.phase = Phase::snn_scratch;
    plan.weights = weights_from_config(cfg);
    plan.optim = optim;
    cfg.reject_unknown();
    std::ofstream log(log_path.empty() ? out_path + ".log.jsonl" : log_path);
    log << provenance(cfg, optim.seed);
    run_phase(net, data, plan, &log);
    save_checkpoint(net, out_path, phase_name(plan.phase), optim.seed);
    std::cout << "train-scratch: " << data.size() << " pairs x " << optim.epochs
              << " epochs -> " << out_path << "\n";
  });

  // ---- register ----
  auto* reg = app.add_subcommand("register", "register one pair, write field and warped image");
  std::string fixed_path, moving_path, flab_path, mlab_path, prefix;
  reg->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  reg->add_option("--fixed", fixed_path, "fixed volume")->required();
  reg->add_option("--moving", moving_path, "moving volume")->required();
  reg->add_option("--fixed-labels", flab_path, "fixed labels (native base)");
  reg->add_option("--moving-labels", mlab_path, "moving labels (native base)");
  reg->add_option("--out-prefix", prefix, "output prefix")->required();
  reg->callback([&] {
    auto net = load_net(ckpt_path);
    auto fixed = load_volume(fixed_path);
    auto moving = load_volume(moving_path);
    Tape<double> tape;
    auto res = forward(net, tape, fixed, moving);
    auto field = tape.value(res.field);
    write_field(prefix + ".field", field);
    write_native(prefix + ".warped", warp_trilinear(moving, field));
    Tensor<double> flab = flab_path.empty() ? Tensor<double>(fixed.shape) : load_volume(flab_path);
    Tensor<double> mlab = mlab_path.empty() ? Tensor<double>(fixed.shape) : load_volume(mlab_path);
    auto r = evaluate_pair("pair", fixed, moving, flab, mlab, field, 5, 1e-8, res.rates);
    std::ofstream csv(prefix + ".csv");
    csv << PairResult::csv_header() << "\n" << r.csv_row() << "\n";
    std::cout << "register: ncc=" << r.ncc << " fold%=" << r.fold_percent << " -> " << prefix
              << ".*\n";
  });

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint over a dataset");
  bool ev_identity = false, ev_gt = false;
  std::int64_t ev_window = 5;
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--ckpt", ckpt_path, "checkpoint (omit with --identity/--ground-truth)");
  ev->add_flag("--identity", ev_identity, "score the zero field instead of a model");
  ev->add_flag("--ground-truth", ev_gt, "score the generating field instead of a model");
  ev->add_option("--ncc-window", ev_window, "local NCC window");
  ev->add_option("--out", out_path, "results csv")->required();
  ev->add_option("--seed", f_seed, "seed recorded in the report");
  ev->callback([&] {
    if (static_cast<int>(ev_identity) + static_cast<int>(ev_gt) + static_cast<int>(!ckpt_path.empty()) != 1)
      throw UserError("evaluate: pass exactly one of --ckpt, --identity, --ground-truth");
    auto ds = open_dataset(data_dir);
    Network<double> net;
    if (!ckpt_path.empty()) net = load_net(ckpt_path);
    std::ofstream csv(out_path);
    csv << provenance(Config(), f_seed < 0 ? 0 : static_cast<std::uint64_t>(f_seed));
    csv << PairResult::csv_header() << "\n";
    double dice_sum = 0, ncc_sum = 0, rate_sum = 0, fold_sum = 0;
    for (const auto& id : ds.ids) {
      auto pr = ds.load(id);
      PairResult r;
      if (ev_identity) {
        Dims4 d = Dims4::of(pr.fixed.shape);
        Tensor<double> zero(Shape{3, d.d, d.h, d.w});
        r = evaluate_pair(id, pr.fixed, pr.moving, pr.fixed_labels, pr.moving_labels, zero,
                          ev_window);
      } else if (ev_gt) {
        r = evaluate_pair(id, pr.fixed, pr.moving, pr.fixed_labels, pr.moving_labels,
                          ds.gt_field(id), ev_window);
      } else {
        r = evaluate_one(net, pr, id, ev_window);
      }
      csv << r.csv_row() << "\n";
      dice_sum += r.dice_mean;
      ncc_sum += r.ncc;
      fold_sum += r.fold_percent;
      for (double rate : r.spike_rates) rate_sum += rate / static_cast<double>(r.spike_rates.size());
    }
    const double n = static_cast<double>(ds.ids.size());
    csv << "mean," << dice_sum / n << ",," << ncc_sum / n << "," << fold_sum / n << ",,,,"
        << rate_sum / n << "\n";
    std::cout << "evaluate: mean dice " << dice_sum / n << " over " << ds.ids.size()
              << " pairs -> " << out_path << "\n";
  });

  // ---- energy-report ----
  auto* en = app.add_subcommand("energy-report", "MAC/SynOp accounting for a spiking checkpoint");
  en->add_option("--data", data_dir, "dataset directory")->required();
  en->add_option("--ckpt", ckpt_path, "spiking checkpoint")->required();
  en->add_option("--out", out_path, "report file")->required();
  en->callback([&] {
    auto net = load_net(ckpt_path);
    if (net.flavor != Flavor::snn) throw UserError("energy-report needs a spiking checkpoint");
    auto ds = open_dataset(data_dir);
    const auto inv = layer_inventory(net.spec);
    std::vector<double> spikes(inv.size(), 0.0), rates(inv.size(), 0.0);
    Dims4 d{};
    for (const auto& id : ds.ids) {
      auto pr = ds.load(id);
      d = Dims4::of(pr.fixed.shape);
      Tape<double> tape;
      auto res = forward(net, tape, pr.fixed, pr.moving);
      for (std::size_t i = 0; i < inv.size(); ++i) {
        spikes[i] += res.spike_counts[i] / static_cast<double>(ds.ids.size());
        rates[i] += res.rates[i] / static_cast<double>(ds.ids.size());
      }
    }
    auto macs = count_macs(net.spec, d.d, d.h, d.w);
    auto syn = project_synops(net.spec, spikes, d.d, d.h, d.w);
    std::ofstream(out_path) << energy_report(net.spec, macs, syn, rates, net.spec.timesteps);
    const auto proj = energy_ratio_projected(static_cast<double>(macs.total), syn.total);
    std::cout << "energy-report: projected R=" << proj.R << " -> " << out_path << "\n";
  });

  // ---- stats-compare ----
  auto* sc = app.add_subcommand("stats-compare", "paired statistics between two evaluate csvs");
  std::string csv_a, csv_b, metric = "dice_mean";
  std::int64_t n_flips = 20000, n_boot = 10000;
  sc->add_option("a", csv_a, "first results csv")->required();
  sc->add_option("b", csv_b, "second results csv")->required();
  sc->add_option("--metric", metric, "column to compare");
  sc->add_option("--out", out_path, "json output (stdout if omitted)");
  sc->add_option("--seed", f_seed, "resampling seed");
  sc->callback([&] {
    auto a = read_metric_column(csv_a, metric);
    auto b = read_metric_column(csv_b, metric);
    auto sample = PairedSample::from_maps(a, b);
    const std::uint64_t seed = f_seed < 0 ? 0 : static_cast<std::uint64_t>(f_seed);
    const auto wil = wilcoxon_signed_rank(sample.deltas);
    const auto ci = bootstrap_ci(sample.deltas, n_boot, 0.95, seed);
    const auto dz = effect_size_dz(sample.deltas);
    nlohmann::json out{{"metric", metric},
                       {"n", sample.deltas.size()},
                       {"mean_delta", mean_of(sample.deltas)},
                       {"sign_flip_p", sign_flip_test(sample.deltas, n_flips, seed)},
                       {"wilcoxon_w", wil.w},
                       {"wilcoxon_p", wil.p},
                       {"wilcoxon_degenerate", wil.degenerate},
                       {"ci95_lo", ci.first},
                       {"ci95_hi", ci.second},
                       {"dz", dz.dz},
                       {"dz_defined", dz.defined},
                       {"seed", seed}};
    if (out_path.empty())
      std::cout << out.dump(2) << "\n";
    else
      std::ofstream(out_path) << out.dump(2) << "\n";
  });

  // ---- sweep ----
  auto* sw = app.add_subcommand("sweep", "timestep x percentile conversion grid");
  std::vector<std::int64_t> sw_T{2, 4, 6};
  std::vector<double> sw_p{50, 75, 90};
  std::int64_t sw_epochs = 0;
  sw->add_option("--data", data_dir, "dataset directory")->required();
  sw->add_option("--ckpt", ckpt_path, "analog teacher checkpoint")->required();
  sw->add_option("--timesteps", sw_T, "timestep grid");
  sw->add_option("--percentiles", sw_p, "threshold percentile grid");
  sw->add_option("--finetune-epochs", sw_epochs, "fine-tune each grid point (0 = raw)");
  sw->add_option("--out", out_path, "pareto csv")->required();
  sw->add_option("--seed", f_seed, "training seed");
  sw->callback([&] {
    auto teacher = load_net(ckpt_path);
    auto ds = open_dataset(data_dir);
    std::vector<std::pair<Tensor<double>, Tensor<double>>> cal_pairs;
    for (const auto& id : ds.ids) {
      auto p = ds.load(id);
      cal_pairs.emplace_back(std::move(p.fixed), std::move(p.moving));
    }
    auto calset = record_activations(teacher, cal_pairs);
    auto data = load_all(ds);
    Dims4 d = Dims4::of(data[0].fixed.shape);
    auto macs = count_macs(teacher.spec, d.d, d.h, d.w);

    std::ofstream csv(out_path);
    csv << "timesteps,percentile,dice_mean,mean_rate,projected_R\n";
    for (std::int64_t T : sw_T) {
      for (double p : sw_p) {
        auto thetas = calibrate_thresholds(calset, p);
        auto student = transfer_weights(teacher, thetas, T);
        if (sw_epochs > 0) {
          PhasePlan<double> plan;
          plan.phase = Phase::snn_finetune;
          plan.weights.ncc_window = 5;
          plan.optim.epochs = sw_epochs;
          plan.optim.lr = 1e-3;
          plan.optim.seed = f_seed < 0 ? 42 : static_cast<std::uint64_t>(f_seed);
          run_phase(student, data, plan);
        }
        double dice = 0, rate = 0, synops = 0;
        const auto inv = layer_inventory(student.spec);
        std::vector<double> spikes(inv.size(), 0.0);
        for (std::size_t i = 0; i < data.size(); ++i) {
          Tape<double> tape;
          auto res = forward(student, tape, data[i].fixed, data[i].moving);
          auto r = evaluate_pair(ds.ids[i], data[i].fixed, data[i].moving, data[i].fixed_labels,
                                 data[i].moving_labels, tape.value(res.field), 5, 1e-8, res.rates);
          dice += r.dice_mean / static_cast<double>(data.size());
          for (std::size_t l = 0; l < inv.size(); ++l) {
            spikes[l] += res.spike_counts[l] / static_cast<double>(data.size());
            rate += res.rates[l] / static_cast<double>(data.size() * inv.size());
          }
        }
        auto syn = project_synops(student.spec, spikes, d.d, d.h, d.w);
        synops = syn.total;
        const auto proj = energy_ratio_projected(static_cast<double>(macs.total), synops);
        csv << T << "," << p << "," << dice << "," << rate << "," << proj.R << "\n";
        std::cout << "sweep: T=" << T << " p=" << p << " dice=" << dice << " rate=" << rate
                  << "\n";
      }
    }
    std::cout << "sweep: grid done -> " << out_path << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
