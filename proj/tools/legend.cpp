// Command-line driver: generate synthetic data, train dynamics and
// baselines, run filtering/smoothing inference, evaluate W1 errors, and
// emit SVG plots. Exit codes: 0 success, 1 usage error, 2 numerical failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "legend/checkpoint.hpp"
#include "legend/infer.hpp"
#include "legend/plot.hpp"

namespace fs = std::filesystem;
using namespace legend;
using sde::Batch;

namespace {

struct Options {
  // shared
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  std::string data_path;
  std::string truth_path;
  std::string checkpoint_path;
  // generate
  std::string dataset = "syn1";
  int dim = 2;
  std::size_t observed = 500;
  std::size_t generated = 1000;
  int timesteps = 4;
  bool zero_noise = false;
  // train
  std::string method = "legend";  // legend | ou | nn
  int iterations = 2000;
  int critic_steps = 5;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double critic_lr = 2e-3;
  int width = 16;
  int hidden_dim = 0;
  int gp_interpolates = 8;
  double lambda_gp = 10.0;
  double drift_penalty = 0.0;
  double lr_decay_to = 1.0;
  int substeps = 5;
  double dt = 0.2;
  // inference
  int prefix_t = -1;
  int head_iterations = 2000;
  std::size_t samples = 1000;
  int gap_k = -1;
  // eval
  std::string pred_path;
  std::size_t subsample = 0;
  int eval_time = -1;
  // plot
  std::string data2_path;
  int bins = 40;
  bool emit_plots = false;
};

learn::TrainConfig to_train_config(const Options& o) {
  learn::TrainConfig cfg;
  cfg.iterations = o.iterations;
  cfg.critic_steps = o.critic_steps;
  cfg.batch_size = o.batch_size;
  cfg.lr = o.lr;
  cfg.critic_lr = o.critic_lr;
  cfg.seed = o.seed;
  cfg.hidden_dim = o.hidden_dim;
  cfg.width = o.width;
  cfg.substeps_per_obs = o.substeps;
  cfg.dt = o.dt;
  cfg.lipschitz.gp_interpolates = o.gp_interpolates;
  cfg.lipschitz.lambda_gp = o.lambda_gp;
  cfg.drift_penalty = o.drift_penalty;
  cfg.lr_decay_to = o.lr_decay_to;
  return cfg;
}

// Echo every parsed option with its value into the run directory so a run
// is reconstructible from its outputs alone.
void echo_config(const CLI::App& cmd, const Options& o) {
  fs::create_directories(o.out_dir);
  std::ofstream os(fs::path(o.out_dir) / "config.txt");
  os << "command=" << cmd.get_name() << "\n";
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames()[0];
    if (name == "help" || name == "config") continue;
    std::string v = opt->count() ? opt->results()[0] : opt->get_default_str();
    os << name << "=" << v << "\n";
  }
}

void save_batch_csv(const Batch& b, int time, const std::string& path) {
  data::AggregateSeries s;
  s.dim = b.dim;
  s.times = {time};
  s.batches = {b};
  data::save_csv(s, path);
}

Batch tile_to(const Batch& src, std::size_t count) {
  Batch out(src.dim, count);
  for (std::size_t i = 0; i < count; ++i)
    for (int j = 0; j < src.dim; ++j)
      out.row(i)[j] = src.row(i % src.count)[j];
  return out;
}

void write_plots(const Options& o, const std::vector<plot::Cloud>& clouds,
                 const std::string& stem) {
  std::ostringstream sc;
  plot::scatter_svg(sc, clouds, stem);
  plot::write_svg((fs::path(o.out_dir) / (stem + "_scatter.svg")).string(),
                  sc.str());
  const int d = clouds.empty() ? 0 : clouds[0].batch->dim;
  for (int j = 0; j < d; ++j) {
    std::ostringstream hs;
    plot::histogram_svg(hs, clouds, j, stem, o.bins);
    plot::write_svg((fs::path(o.out_dir) /
                     (stem + "_hist_" + std::to_string(j) + ".svg"))
                        .string(),
                    hs.str());
  }
}

void eval_record(const Options& o, const std::string& task, int time,
                 const Batch& pred, const Batch& truth) {
  Batch a = pred, b = truth;
  if (a.count != b.count) {
    const std::size_t n = std::min(a.count, b.count);
    data::AggregateSeries sa{a.dim, {time}, {a}, -1, ""};
    data::AggregateSeries sb{b.dim, {time}, {b}, -1, ""};
    a = data::subsample(sa, n, o.seed ^ 0xE7A1).batches[0];
    b = data::subsample(sb, n, o.seed ^ 0xE7A2).batches[0];
  }
  const double err = ot::w1_exact(a, b).first;
  std::ofstream os(fs::path(o.out_dir) / "eval.csv");
  os << "dataset,task,dimension,method,target_timestep,w1_error,seed\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", err);
  os << o.dataset << "," << task << "," << pred.dim << "," << o.method << ","
     << time << "," << buf << "," << o.seed << "\n";
  std::printf("w1_error t=%d: %.6f\n", time, err);
}

// ---- checkpoint packing ----

nn::Checkpoint pack_legend(const sde::DiffusionModel& m) {
  nn::Checkpoint ck;
  ck.meta.emplace_back("method", "legend");
  ck.meta.emplace_back("hidden_dim", std::to_string(m.hidden_dim));
  ck.meta.emplace_back("obs_dim", std::to_string(m.obs_dim));
  ck.meta.emplace_back("dt", nn::detail::fmt17(m.dt));
  ck.meta.emplace_back("substeps", std::to_string(m.substeps_per_obs));
  for (int i = 0; i < m.sigma_root.rows; ++i)
    for (int j = 0; j < m.sigma_root.cols; ++j)
      ck.meta.emplace_back("sr_" + std::to_string(i) + "_" + std::to_string(j),
                           nn::detail::fmt17(m.sigma_root(i, j)));
  ck.mlps.emplace_back("g", m.g);
  ck.mlps.emplace_back("f", m.f);
  return ck;
}

Mat unpack_sigma(const nn::Checkpoint& ck, int n) {
  Mat sr(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      sr(i, j) = std::stod(ck.meta_value(
          "sr_" + std::to_string(i) + "_" + std::to_string(j), "0"));
  return sr;
}

sde::DiffusionModel unpack_legend(const nn::Checkpoint& ck) {
  sde::DiffusionModel m;
  m.hidden_dim = std::stoi(ck.meta_value("hidden_dim"));
  m.obs_dim = std::stoi(ck.meta_value("obs_dim"));
  m.dt = std::stod(ck.meta_value("dt"));
  m.substeps_per_obs = std::stoi(ck.meta_value("substeps"));
  m.sigma_root = unpack_sigma(ck, m.hidden_dim);
  m.g = ck.mlp("g");
  m.f = ck.mlp("f");
  return m;
}

nn::Checkpoint pack_baseline(const learn::ObservationModel& m) {
  nn::Checkpoint ck;
  ck.meta.emplace_back("method",
                       m.kind == learn::BaselineKind::OU ? "ou" : "nn");
  ck.meta.emplace_back("dim", std::to_string(m.dim));
  ck.meta.emplace_back("dt", nn::detail::fmt17(m.dt));
  ck.meta.emplace_back("substeps", std::to_string(m.substeps_per_obs));
  for (int i = 0; i < m.sigma_root.rows; ++i)
    for (int j = 0; j < m.sigma_root.cols; ++j)
      ck.meta.emplace_back("sr_" + std::to_string(i) + "_" + std::to_string(j),
                           nn::detail::fmt17(m.sigma_root(i, j)));
  if (m.kind == learn::BaselineKind::OU) {
    ck.meta.emplace_back("log_theta", nn::detail::fmt17(m.log_theta));
    for (std::size_t j = 0; j < m.mu.size(); ++j)
      ck.meta.emplace_back("mu_" + std::to_string(j),
                           nn::detail::fmt17(m.mu[j]));
  } else {
    ck.mlps.emplace_back("drift", m.drift_net);
  }
  return ck;
}

learn::ObservationModel unpack_baseline(const nn::Checkpoint& ck) {
  learn::ObservationModel m;
  m.kind = learn::baseline_from_name(ck.meta_value("method"));
  m.dim = std::stoi(ck.meta_value("dim"));
  m.dt = std::stod(ck.meta_value("dt"));
  m.substeps_per_obs = std::stoi(ck.meta_value("substeps"));
  m.sigma_root = unpack_sigma(ck, m.dim);
  if (m.kind == learn::BaselineKind::OU) {
    m.log_theta = std::stod(ck.meta_value("log_theta"));
    m.mu.resize(m.dim);
    for (int j = 0; j < m.dim; ++j)
      m.mu[j] = std::stod(ck.meta_value("mu_" + std::to_string(j)));
  } else {
    m.drift_net = ck.mlp("drift");
  }
  return m;
}

void save_checkpoint(const nn::Checkpoint& ck, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  nn::checkpoint_save(ck, os);
}

nn::Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return nn::checkpoint_load(is);
}

// ---- subcommand bodies ----

int cmd_generate(const Options& o) {
  data::SyntheticSpec spec;
  spec.kind = data::syn_from_name(o.dataset);
  spec.dim = o.dim;
  spec.observed_per_step = o.observed;
  spec.generated_per_step = o.generated;
  spec.num_obs_times = o.timesteps;
  spec.dt = o.dt;
  spec.substeps = o.substeps;
  spec.zero_noise = o.zero_noise;
  data::SyntheticData d = data::gen_synthetic(spec, o.seed);
  fs::create_directories(o.out_dir);
  data::save_csv(d.observed, (fs::path(o.out_dir) / "observations.csv").string());
  data::save_csv(d.observed_full, (fs::path(o.out_dir) / "truth.csv").string());
  data::save_csv(d.hidden, (fs::path(o.out_dir) / "hidden.csv").string());
  for (std::size_t s = 0; s < d.observed.times.size(); ++s)
    std::printf("t=%d observed=%zu full=%zu\n", d.observed.times[s],
                d.observed.batches[s].count, d.observed_full.batches[s].count);
  if (o.emit_plots)
    for (std::size_t s = 0; s < d.observed.times.size(); ++s)
      write_plots(o, {{&d.observed.batches[s], "observed", "#1f77b4"}},
                  "observed_t" + std::to_string(d.observed.times[s]));
  return 0;
}

int cmd_train(const Options& o) {
  data::AggregateSeries series = data::load_csv(o.data_path);
  if (o.prefix_t >= 0) series = data::prefix(series, o.prefix_t);
  learn::TrainConfig cfg = to_train_config(o);
  fs::create_directories(o.out_dir);
  nn::Checkpoint ck;
  learn::TrainReport report;
  if (o.method == "legend") {
    learn::DynamicsResult res = learn::train_dynamics(series, cfg);
    ck = pack_legend(res.model);
    report = std::move(res.report);
  } else {
    learn::BaselineResult res = learn::train_baseline(
        series, learn::baseline_from_name(o.method), cfg);
    ck = pack_baseline(res.model);
    report = std::move(res.report);
  }
  save_checkpoint(ck, (fs::path(o.out_dir) / "checkpoint.txt").string());
  std::ofstream rep(fs::path(o.out_dir) / "train_report.csv");
  report.to_csv(rep);
  std::printf("trained method=%s iterations=%d -> %s/checkpoint.txt\n",
              o.method.c_str(), o.iterations, o.out_dir.c_str());
  return 0;
}

// Baselines carry no inference head: their prediction for time t is a
// rollout of the observation-space dynamics from the first observed bag.
Batch baseline_predict(const learn::ObservationModel& m,
                       const data::AggregateSeries& series, int target_time,
                       std::size_t samples, std::uint64_t seed) {
  Batch start = tile_to(series.batches.front(), samples);
  const int gaps = target_time - series.times.front();
  return learn::propagate_observations(m, start, gaps, rng::mix64(seed ^ 0xB0));
}

int cmd_filter(Options& o) {
  data::AggregateSeries series = data::load_csv(o.data_path);
  if (o.prefix_t >= 0) series = data::prefix(series, o.prefix_t);
  nn::Checkpoint ck = load_checkpoint(o.checkpoint_path);
  o.method = ck.meta_value("method");
  const int target = series.times.back() + 1;
  fs::create_directories(o.out_dir);

  Batch pred(series.dim, 0);
  if (o.method == "legend") {
    sde::DiffusionModel model = unpack_legend(ck);
    learn::TrainConfig hcfg = to_train_config(o);
    hcfg.iterations = o.head_iterations;
    infer::HeadResult head = infer::train_filter(model, series, hcfg);
    pred = infer::predict_next(model, head.head, series, o.samples,
                               rng::mix64(o.seed ^ 0xF1));
    nn::Checkpoint hck;
    hck.meta.emplace_back("method", "filter_head");
    hck.lstms.emplace_back("rnn", head.head.rnn);
    save_checkpoint(hck, (fs::path(o.out_dir) / "head.txt").string());
  } else {
    pred = baseline_predict(unpack_baseline(ck), series, target, o.samples,
                            o.seed);
  }
  save_batch_csv(pred, target,
                 (fs::path(o.out_dir) / "prediction.csv").string());
  if (!o.truth_path.empty()) {
    data::AggregateSeries truth = data::load_csv(o.truth_path);
    eval_record(o, "filter", target, pred, truth.at_time(target));
    if (o.emit_plots)
      write_plots(o,
                  {{&truth.at_time(target), "true", "#1f77b4"},
                   {&pred, "predicted", "#d62728"}},
                  "filter_t" + std::to_string(target));
  } else if (o.emit_plots) {
    write_plots(o, {{&pred, "predicted", "#d62728"}},
                "filter_t" + std::to_string(target));
  }
  return 0;
}

int cmd_smooth(Options& o) {
  data::AggregateSeries series = data::load_csv(o.data_path);
  if (o.prefix_t >= 0) series = data::prefix(series, o.prefix_t);
  const int k = o.gap_k;
  if (k <= series.times.front() || k >= series.times.back())
    throw CLI::ValidationError("--gap must be strictly interior");
  if (series.has_time(k)) series = data::drop_timestep(series, k);
  series.gap = k;
  nn::Checkpoint ck = load_checkpoint(o.checkpoint_path);
  o.method = ck.meta_value("method");
  fs::create_directories(o.out_dir);

  const int T_max = series.times.back();
  for (int t : series.times) {
    infer::BarycenterWeights w = infer::barycenter_weights(t, T_max);
    std::printf("lambda t=%d: lambda1=%.6f lambda2=%.6f\n", t, w.lambda1,
                w.lambda2);
  }

  Batch pred(series.dim, 0);
  if (o.method == "legend") {
    sde::DiffusionModel model = unpack_legend(ck);
    learn::TrainConfig hcfg = to_train_config(o);
    hcfg.iterations = o.head_iterations;
    infer::HeadResult fwd = infer::train_filter(model, series, hcfg);
    infer::HeadResult bwd = infer::train_backward(model, series, hcfg);
    infer::SmootherResult smo =
        infer::train_smoother(model, series, fwd.head, bwd.head, hcfg);
    pred = infer::predict_missing(model, smo.head, series, k, o.samples,
                                  rng::mix64(o.seed ^ 0xF2));
    nn::Checkpoint hck;
    hck.meta.emplace_back("method", "smoother_head");
    hck.lstms.emplace_back("rnn", smo.head.rnn);
    save_checkpoint(hck, (fs::path(o.out_dir) / "head.txt").string());
  } else {
    pred = baseline_predict(unpack_baseline(ck), series, k, o.samples, o.seed);
  }
  save_batch_csv(pred, k, (fs::path(o.out_dir) / "prediction.csv").string());
  if (!o.truth_path.empty()) {
    data::AggregateSeries truth = data::load_csv(o.truth_path);
    eval_record(o, "smooth", k, pred, truth.at_time(k));
    if (o.emit_plots)
      write_plots(o,
                  {{&truth.at_time(k), "true", "#1f77b4"},
                   {&pred, "predicted", "#d62728"}},
                  "smooth_t" + std::to_string(k));
  } else if (o.emit_plots) {
    write_plots(o, {{&pred, "predicted", "#d62728"}},
                "smooth_t" + std::to_string(k));
  }
  return 0;
}

int cmd_eval(const Options& o) {
  data::AggregateSeries pred = data::load_csv(o.pred_path);
  data::AggregateSeries truth = data::load_csv(o.truth_path);
  const int t = o.eval_time >= 0 ? o.eval_time : pred.times.front();
  Batch a = pred.at_time(t);
  Batch b = truth.at_time(t);
  if (a.count != b.count) {
    if (o.subsample == 0)
      throw CLI::ValidationError(
          "batch sizes differ (" + std::to_string(a.count) + " vs " +
          std::to_string(b.count) + "); pass --subsample N");
    data::AggregateSeries sa{a.dim, {t}, {a}, -1, ""};
    data::AggregateSeries sb{b.dim, {t}, {b}, -1, ""};
    a = data::subsample(sa, o.subsample, o.seed ^ 0xE7A1).batches[0];
    b = data::subsample(sb, o.subsample, o.seed ^ 0xE7A2).batches[0];
  }
  std::printf("w1_exact t=%d: %.17g\n", t, ot::w1_exact(a, b).first);
  return 0;
}

int cmd_plot(const Options& o) {
  data::AggregateSeries s1 = data::load_csv(o.data_path);
  data::AggregateSeries s2;
  const bool two = !o.data2_path.empty();
  if (two) s2 = data::load_csv(o.data2_path);
  fs::create_directories(o.out_dir);
  for (std::size_t i = 0; i < s1.times.size(); ++i) {
    std::vector<plot::Cloud> clouds = {
        {&s1.batches[i], two ? "true" : "data", "#1f77b4"}};
    if (two && s2.has_time(s1.times[i]))
      clouds.push_back({&s2.at_time(s1.times[i]), "predicted", "#d62728"});
    write_plots(o, clouds, "t" + std::to_string(s1.times[i]));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learn hidden diffusion dynamics from aggregate observations"};
  app.option_defaults()->always_capture_default();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  Options o;

  std::string config_path;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", o.out_dir, "output directory");
    c->add_option("--seed", o.seed, "master RNG seed (recorded in outputs)");
    c->add_option("--config", config_path,
                  "flat key=value config file; flags override");
    return c;
  };
  auto add_train_opts = [&](CLI::App* c) {
    c->add_option("--iterations", o.iterations, "generator iterations");
    c->add_option("--critic-steps", o.critic_steps, "critic steps per iter");
    c->add_option("--batch", o.batch_size, "minibatch size");
    c->add_option("--lr", o.lr, "generator learning rate");
    c->add_option("--critic-lr", o.critic_lr, "critic learning rate");
    c->add_option("--width", o.width, "hidden layer width");
    c->add_option("--hidden-dim", o.hidden_dim, "hidden state dim (0=obs dim)");
    c->add_option("--gp-interpolates", o.gp_interpolates,
                  "interpolates per penalty estimate (0=full batch)");
    c->add_option("--lambda-gp", o.lambda_gp, "gradient penalty coefficient");
    c->add_option("--drift-penalty", o.drift_penalty,
                  "least-action penalty on mean squared drift");
    c->add_option("--lr-decay-to", o.lr_decay_to,
                  "final learning-rate fraction (linear schedule)");
    c->add_option("--substeps", o.substeps, "Euler substeps per observation gap");
    c->add_option("--dt", o.dt, "Euler step size");
    c->add_option("--prefix", o.prefix_t,
                  "use only timesteps <= this value (-1 = all)");
  };

  CLI::App* g = add_common(app.add_subcommand("generate", "write synthetic CSVs"));
  g->add_option("--dataset", o.dataset, "syn1 | syn2 | syn3");
  g->add_option("--dim", o.dim, "state dimension");
  g->add_option("--observed", o.observed, "observed samples per timestep");
  g->add_option("--generated", o.generated, "full samples per timestep");
  g->add_option("--timesteps", o.timesteps, "number of observation times");
  g->add_option("--dt", o.dt, "Euler step size");
  g->add_option("--substeps", o.substeps, "substeps per observation gap");
  g->add_flag("--zero-noise", o.zero_noise, "disable diffusion noise");
  g->add_flag("--plots", o.emit_plots, "emit SVG plots");

  CLI::App* tr = add_common(app.add_subcommand("train", "train dynamics or baseline"));
  tr->add_option("--data", o.data_path, "observations CSV")->required();
  tr->add_option("--method", o.method, "legend | ou | nn");
  add_train_opts(tr);

  CLI::App* fi = add_common(app.add_subcommand("filter", "predict the next observation"));
  fi->add_option("--data", o.data_path, "observations CSV")->required();
  fi->add_option("--checkpoint", o.checkpoint_path, "trained checkpoint")->required();
  fi->add_option("--truth", o.truth_path, "held-out truth CSV for scoring");
  fi->add_option("--samples", o.samples, "prediction sample count");
  fi->add_option("--head-iterations", o.head_iterations, "head training iterations");
  fi->add_flag("--plots", o.emit_plots, "emit SVG plots");
  add_train_opts(fi);

  CLI::App* sm = add_common(app.add_subcommand("smooth", "predict a missing observation"));
  sm->add_option("--data", o.data_path, "observations CSV")->required();
  sm->add_option("--checkpoint", o.checkpoint_path, "trained checkpoint")->required();
  sm->add_option("--gap", o.gap_k, "missing interior timestep k")->required();
  sm->add_option("--truth", o.truth_path, "held-out truth CSV for scoring");
  sm->add_option("--samples", o.samples, "prediction sample count");
  sm->add_option("--head-iterations", o.head_iterations, "head training iterations");
  sm->add_flag("--plots", o.emit_plots, "emit SVG plots");
  add_train_opts(sm);

  CLI::App* ev = add_common(app.add_subcommand("eval", "exact W1 between two CSVs"));
  ev->add_option("--pred", o.pred_path, "prediction CSV")->required();
  ev->add_option("--truth", o.truth_path, "truth CSV")->required();
  ev->add_option("--time", o.eval_time, "timestep to compare (default: first)");
  ev->add_option("--subsample", o.subsample, "equalize sizes by subsampling");

  CLI::App* pl = add_common(app.add_subcommand("plot", "scatter + histograms per timestep"));
  pl->add_option("--data", o.data_path, "data CSV")->required();
  pl->add_option("--overlay", o.data2_path, "second CSV overlaid as 'predicted'");
  pl->add_option("--bins", o.bins, "histogram bins");

  // Expand --config FILE into option tokens placed before the explicit
  // flags, so explicit flags win under the TakeLast policy.
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string cfg_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) cfg_file = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) cfg_file = args[i].substr(9);
  }
  if (!cfg_file.empty() && args.size() >= 1) {
    std::ifstream is(cfg_file);
    if (!is) {
      std::fprintf(stderr, "error: cannot open config file %s\n",
                   cfg_file.c_str());
      return 1;
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "error: bad config line (want key=value): %s\n",
                     line.c_str());
        return 1;
      }
      tokens.push_back("--" + line.substr(0, eq) + "=" + line.substr(eq + 1));
    }
    args.insert(args.begin() + 1, tokens.begin(), tokens.end());
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    echo_config(*cmd, o);
    if (cmd == g) return cmd_generate(o);
    if (cmd == tr) return cmd_train(o);
    if (cmd == fi) return cmd_filter(o);
    if (cmd == sm) return cmd_smooth(o);
    if (cmd == ev) return cmd_eval(o);
    if (cmd == pl) return cmd_plot(o);
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const learn::TrainDivergence& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
