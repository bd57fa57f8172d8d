#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "fast/channel/stats.hpp"
#include "fast/codec/train.hpp"
#include "fast/distill/distill.hpp"
#include "fast/harness/dataset.hpp"
#include "fast/harness/sweep.hpp"
#include "fast/predictor/predictor.hpp"

namespace fs = std::filesystem;
using namespace fast;

namespace {

struct Common {
  std::string profile = "desk";
  std::uint64_t seed = 1;
  bool seed_given = false;
  // channel
  std::size_t paths = 16;
  double doppler_hz = 10.0;
  double sample_period = 1e-3;
  std::uint64_t channel_seed = 1;
  unsigned threads = 1;

  codec::Geometry geometry() const {
    if (profile == "desk") return codec::Geometry::desk();
    if (profile == "paper") return codec::Geometry::paper();
    throw std::invalid_argument("unknown profile '" + profile + "' (desk | paper)");
  }

  channel::SosConfig sos() const { return {paths, doppler_hz, sample_period, channel_seed}; }
};

struct DataOptions {
  std::string path;               // FSTI container or CIFAR-10 batch; empty: synthetic
  std::size_t count = 2200;       // synthetic images before the 90/10 split
  std::uint64_t seed = 1;
};

void add_data_options(CLI::App* app, DataOptions& d) {
  app->add_option("--data", d.path, "image file (FSTI container or CIFAR-10 batch); synthetic when empty");
  app->add_option("--data-count", d.count, "synthetic images to generate")->check(CLI::PositiveNumber);
  app->add_option("--data-seed", d.seed, "synthetic dataset seed");
}

harness::Dataset load_data(const DataOptions& d, const codec::Geometry& g) {
  auto images = d.path.empty() ? harness::gen_synthetic_dataset(d.count, g.image_size, d.seed) : harness::load_images(d.path);
  if (images.empty()) throw std::runtime_error("no images loaded");
  if (images.front().shape() != g.image_shape()) {
    throw std::invalid_argument("images are " + nn::to_string(images.front().shape()) + " but the profile expects " +
                                nn::to_string(g.image_shape()));
  }
  return images;
}

struct CodecOptions {
  std::size_t train_images = 2000;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-3;
  double snr_train = 13.0;
};

void add_codec_options(CLI::App* app, CodecOptions& c, const std::string& prefix = "") {
  app->add_option("--" + prefix + "train-images", c.train_images, "training images taken from the train split");
  app->add_option("--" + prefix + "epochs", c.epochs, "codec epochs");
  app->add_option("--" + prefix + "batch", c.batch, "codec batch size")->check(CLI::PositiveNumber);
  app->add_option("--" + prefix + "lr", c.lr, "codec learning rate");
  app->add_option("--snr-train", c.snr_train, "training SNR in dB (inf for a noiseless link)");
}

struct PredictorOptions {
  std::size_t sequences = 200;
  std::size_t epochs = 15;
  double lr = 3e-3;
  std::size_t window = 32;
};

void add_predictor_options(CLI::App* app, PredictorOptions& p, const std::string& prefix = "") {
  app->add_option("--" + prefix + "sequences", p.sequences, "SOS realizations used for training");
  app->add_option("--" + prefix + "epochs", p.epochs, "predictor epochs");
  app->add_option("--" + prefix + "lr", p.lr, "initial learning rate");
  app->add_option("--history", p.window, "history window t1")->check(CLI::PositiveNumber);
}

struct PriorityOptions {
  double alpha = 0.5;
  double beta = 0.5;
  double radius_fraction = 0.1;
  std::size_t pga_steps = 20;
  double pga_step_fraction = 2.0;

  priority::NoiseBudget budget(std::uint64_t seed) const {
    priority::NoiseBudget b;
    b.radius_fraction = radius_fraction;
    b.steps = pga_steps;
    b.step_fraction = pga_step_fraction;
    b.seed = seed;
    return b;
  }
  priority::PriorityWeights weights() const { return {alpha, beta}; }
};

void add_budget_options(CLI::App* app, PriorityOptions& p) {
  app->add_option("--radius-fraction", p.radius_fraction, "semantic noise radius as a fraction of ||A_k||");
  app->add_option("--pga-steps", p.pga_steps, "projected gradient ascent iterations");
  app->add_option("--pga-step-fraction", p.pga_step_fraction, "ascent step size as a multiple of the radius");
}

void add_weight_options(CLI::App* app, PriorityOptions& p) {
  app->add_option("--alpha", p.alpha, "importance weight");
  app->add_option("--beta", p.beta, "robustness weight");
}

struct StudentOptions {
  std::size_t images = 400;
  std::size_t holdout = 100;
  std::size_t epochs = 60;
  double lr = 3e-3;
  std::size_t grid = 2;
  std::size_t hidden = 24;
  std::size_t batch = 32;
};

void add_student_options(CLI::App* app, StudentOptions& s, const std::string& prefix = "") {
  app->add_option("--" + prefix + "epochs", s.epochs, "student epochs");
  app->add_option("--" + prefix + "lr", s.lr, "student learning rate");
  app->add_option("--grid", s.grid, "pooled grid side")->check(CLI::PositiveNumber);
  app->add_option("--hidden", s.hidden, "hidden units")->check(CLI::PositiveNumber);
  app->add_option("--" + prefix + "batch", s.batch, "student batch size")->check(CLI::PositiveNumber);
}

class Log {
 public:
  template <class... T>
  void operator()(const T&... parts) const {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    std::ostringstream line;
    line << '[' << std::fixed << std::setprecision(1) << t << "s] ";
    line.unsetf(std::ios::floatfield);
    line.precision(6);
    (line << ... << parts) << '\n';
    std::cerr << line.str();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

const Log log_line;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

bool codec_exists(const std::string& prefix) {
  return !prefix.empty() && fs::exists(prefix + ".enc") && fs::exists(prefix + ".dec");
}

codec::Codec train_codec_from(const harness::Dataset& train, const CodecOptions& o, const Common& c,
                              std::vector<double>* curve = nullptr) {
  codec::CodecTrainConfig cfg;
  cfg.geometry = c.geometry();
  cfg.channel = c.sos();
  cfg.snr_train_db = o.snr_train;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.seed = c.seed;
  const harness::Dataset subset(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(std::min(o.train_images, train.size())));
  log_line("training codec on ", subset.size(), " images for ", o.epochs, " epochs");
  auto res = codec::train_codec(subset, cfg, [](std::size_t e, double l) { log_line("  codec epoch ", e, " loss ", l); });
  if (curve) *curve = res.epoch_loss;
  return std::move(res.codec);
}

predictor::PredictorTrainResult train_predictor_from(const PredictorOptions& o, const Common& c) {
  predictor::PredictorTrainConfig cfg;
  cfg.channel = c.sos();
  cfg.model.window = o.window;
  cfg.num_sequences = o.sequences;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.final_learning_rate = o.lr / 10.0;
  cfg.seed = c.seed;
  log_line("training predictor on ", o.sequences, " realizations for ", o.epochs, " epochs");
  auto res = predictor::train_predictor(cfg, [](std::size_t e, double l) { log_line("  predictor epoch ", e, " loss ", l); });
  log_line("predictor one-step holdout NMSE ", res.holdout_nmse);
  return res;
}

distill::StudentTrainResult train_student_from(const distill::DistillDataset& train, const distill::DistillDataset* hold,
                                               const StudentOptions& o, std::uint64_t seed) {
  distill::StudentTrainConfig cfg;
  cfg.model = {o.grid, o.hidden};
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.seed = seed;
  auto res = distill::train_student(train, cfg, hold);
  log_line(distill::to_string(train.kind), " student: train loss ", res.epoch_loss.back(),
           hold ? ", holdout MSE " + std::to_string(res.holdout_mse) +
                      ", holdout Spearman " + std::to_string(distill::mean_spearman(res.student, *hold))
                : std::string());
  return res;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature arrangement over predicted fading channels: training, datasets and evaluation"};
  app.set_config("--config", "", "key=value configuration file ([subcommand] sections for subcommand keys)");
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--profile", common.profile, "geometry profile: desk (16x16) or paper (32x32)")
      ->check(CLI::IsMember({"desk", "paper"}));
  auto* seed_opt = app.add_option("--seed", common.seed, "master seed");
  app.add_option("--paths", common.paths, "SOS paths M")->check(CLI::PositiveNumber);
  app.add_option("--doppler-hz", common.doppler_hz, "maximum Doppler frequency");
  app.add_option("--sample-period", common.sample_period, "CSI sample period in seconds");
  app.add_option("--channel-seed", common.channel_seed, "seed of the SOS path parameters");
  app.add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic image dataset");
  std::size_t gen_count = 2200;
  std::string gen_out;
  gen->add_option("--count", gen_count, "images")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output FSTI file")->required();

  // train-codec
  auto* tc = app.add_subcommand("train-codec", "train the encoder/decoder through the fading channel");
  DataOptions tc_data;
  CodecOptions tc_opt;
  std::string tc_out, tc_curve;
  add_data_options(tc, tc_data);
  add_codec_options(tc, tc_opt);
  tc->add_option("--out", tc_out, "checkpoint prefix (writes PREFIX.enc and PREFIX.dec)")->required();
  tc->add_option("--curve", tc_curve, "training curve CSV (epoch,loss)");

  // train-predictor
  auto* tp = app.add_subcommand("train-predictor", "train the LSTM channel predictor");
  PredictorOptions tp_opt;
  std::string tp_out;
  add_predictor_options(tp, tp_opt);
  tp->add_option("--out", tp_out, "predictor parameter file")->required();

  // gen-priority-dataset
  auto* gp = app.add_subcommand("gen-priority-dataset", "run the teacher algorithms and store (A, w) and (A, r) records");
  DataOptions gp_data;
  PriorityOptions gp_pri;
  std::string gp_codec, gp_split = "train", gp_w, gp_r;
  std::size_t gp_first = 0, gp_count = 400;
  add_data_options(gp, gp_data);
  add_budget_options(gp, gp_pri);
  gp->add_option("--codec", gp_codec, "codec checkpoint prefix")->required();
  gp->add_option("--split", gp_split, "record split: train draws from the training part, holdout from the test part")
      ->check(CLI::IsMember({"train", "holdout"}));
  gp->add_option("--first", gp_first, "first image of the split");
  gp->add_option("--count", gp_count, "images")->check(CLI::PositiveNumber);
  gp->add_option("--out-importance", gp_w, "importance dataset file")->required();
  gp->add_option("--out-robustness", gp_r, "robustness dataset file")->required();

  // train-students
  auto* ts = app.add_subcommand("train-students", "train WNet and RNet on teacher datasets");
  StudentOptions ts_opt;
  std::string ts_w, ts_r, ts_hw, ts_hr, ts_wnet, ts_rnet;
  add_student_options(ts, ts_opt);
  ts->add_option("--importance", ts_w, "importance training dataset")->required();
  ts->add_option("--robustness", ts_r, "robustness training dataset")->required();
  ts->add_option("--holdout-importance", ts_hw, "importance holdout dataset");
  ts->add_option("--holdout-robustness", ts_hr, "robustness holdout dataset");
  ts->add_option("--wnet", ts_wnet, "WNet output file")->required();
  ts->add_option("--rnet", ts_rnet, "RNet output file")->required();

  // run-eval
  auto* re = app.add_subcommand("run-eval", "evaluate the scheme matrix over test SNRs");
  DataOptions re_data;
  CodecOptions re_codec;
  PredictorOptions re_pred;
  PriorityOptions re_pri;
  StudentOptions re_stud;
  std::string re_codec_path, re_pred_path, re_wnet, re_rnet, re_csv = "-", re_json, re_jsonl;
  std::vector<double> re_snrs{0, 5, 10, 15, 20, 25};
  std::vector<std::string> re_schemes{"PC_FP_KD", "KC_FP_KD", "KC_FP", "PC_FP", "DJSCC", "RANDOM_ORDER"};
  std::string re_eq = "mmse";
  std::size_t re_test = 200, re_boot = 1000;
  add_data_options(re, re_data);
  add_codec_options(re, re_codec, "codec-");
  add_predictor_options(re, re_pred, "predictor-");
  add_budget_options(re, re_pri);
  add_weight_options(re, re_pri);
  add_student_options(re, re_stud, "student-");
  re->add_option("--student-images", re_stud.images, "teacher images used to train the students");
  re->add_option("--student-holdout", re_stud.holdout, "teacher images held out for student reporting");
  re->add_option("--codec", re_codec_path, "codec checkpoint prefix; trained and written when missing");
  re->add_option("--predictor", re_pred_path, "predictor file; trained and written when missing");
  re->add_option("--wnet", re_wnet, "WNet file; trained and written when missing");
  re->add_option("--rnet", re_rnet, "RNet file; trained and written when missing");
  re->add_option("--snr", re_snrs, "comma-separated test SNRs in dB")->delimiter(',');
  re->add_option("--schemes", re_schemes, "comma-separated schemes")->delimiter(',');
  re->add_option("--equalizer", re_eq, "mmse or zf")->check(CLI::IsMember({"mmse", "zf"}));
  re->add_option("--test-images", re_test, "test images (from the held-out tenth)")->check(CLI::PositiveNumber);
  re->add_option("--bootstrap", re_boot, "bootstrap resamples")->check(CLI::PositiveNumber);
  re->add_option("--csv", re_csv, "aggregate CSV (- for stdout)");
  re->add_option("--json", re_json, "JSON summary");
  re->add_option("--jsonl", re_jsonl, "per-image trace JSONL");

  // eval-predictor
  auto* ep = app.add_subcommand("eval-predictor", "per-horizon NMSE of the rolling forecast against persistence");
  std::string ep_pred, ep_csv = "-";
  std::size_t ep_windows = 500, ep_t2 = 24, ep_window = 32;
  std::uint64_t ep_stream = 1000000;
  ep->add_option("--predictor", ep_pred, "predictor file")->required();
  ep->add_option("--history", ep_window, "history window t1 the predictor was trained with");
  ep->add_option("--windows", ep_windows, "held-out windows")->check(CLI::PositiveNumber);
  ep->add_option("--horizon", ep_t2, "forecast horizon t2")->check(CLI::PositiveNumber);
  ep->add_option("--first-stream", ep_stream, "first SOS realization of the held-out windows");
  ep->add_option("--csv", ep_csv, "output CSV (- for stdout)");

  // channel-stats
  auto* cs = app.add_subcommand("channel-stats", "statistics of the SOS channel generator");
  channel::ChannelStatsOptions cs_opt;
  std::string cs_json = "-";
  cs->add_option("--samples", cs_opt.moment_samples, "samples for moments and phase")->check(CLI::PositiveNumber);
  cs->add_option("--realizations", cs_opt.autocorr_realizations, "realizations for the autocorrelation")
      ->check(CLI::PositiveNumber);
  cs->add_option("--length", cs_opt.autocorr_length, "samples per realization");
  cs->add_option("--max-lag", cs_opt.max_lag, "largest lag (0: quarter coherence span)");
  cs->add_option("--phase-bins", cs_opt.phase_bins, "phase histogram bins")->check(CLI::PositiveNumber);
  cs->add_option("--json", cs_json, "output JSON (- for stdout)");

  CLI11_PARSE(app, argc, argv);
  common.seed_given = seed_opt->count() > 0;

  try {
    const auto g = common.geometry();

    if (gen->parsed()) {
      harness::save_dataset(gen_out, harness::gen_synthetic_dataset(gen_count, g.image_size, common.seed));
      log_line("wrote ", gen_count, " images to ", gen_out);
      return 0;
    }

    if (tc->parsed()) {
      const auto all = load_data(tc_data, g);
      const auto [train, test] = harness::split_train_test(all);
      std::vector<double> curve;
      const auto codec = train_codec_from(train, tc_opt, common, &curve);
      codec.save(tc_out);
      if (!tc_curve.empty()) {
        codec::CodecTrainResult r{codec, curve};
        std::ostringstream os;
        r.write_curve_csv(os);
        write_text(tc_curve, os.str());
      }
      double psnr = 0.0;
      std::size_t n = 0;
      for (const auto& img : test) {
        const double p = codec::psnr(img, codec.decode(codec.encode(img)));
        if (std::isfinite(p)) psnr += p, ++n;
      }
      log_line("noiseless test PSNR ", n ? psnr / static_cast<double>(n) : NAN, " dB over ", n, " images");
      return 0;
    }

    if (tp->parsed()) {
      const auto res = train_predictor_from(tp_opt, common);
      res.predictor.params().save_file(tp_out);
      return 0;
    }

    if (gp->parsed()) {
      const auto all = load_data(gp_data, g);
      const auto [train, test] = harness::split_train_test(all);
      const auto& pool = gp_split == "train" ? train : test;
      if (gp_first + gp_count > pool.size()) {
        throw std::invalid_argument("requested images " + std::to_string(gp_first) + ".." +
                                    std::to_string(gp_first + gp_count) + " exceed the " + gp_split + " split (" +
                                    std::to_string(pool.size()) + ")");
      }
      const auto codec = codec::Codec::load(gp_codec, g);
      const harness::Dataset images(pool.begin() + static_cast<std::ptrdiff_t>(gp_first),
                                    pool.begin() + static_cast<std::ptrdiff_t>(gp_first + gp_count));
      const auto split = gp_split == "train" ? distill::Split::Train : distill::Split::Holdout;
      log_line("running teacher priority on ", images.size(), " images");
      const auto pair = distill::build_distill_dataset(codec, images, gp_pri.budget(common.seed), split, common.threads);
      pair.importance.save_file(gp_w);
      pair.robustness.save_file(gp_r);
      log_line("wrote ", gp_w, " and ", gp_r);
      return 0;
    }

    if (ts->parsed()) {
      const auto w = distill::DistillDataset::load_file(ts_w);
      const auto r = distill::DistillDataset::load_file(ts_r);
      std::optional<distill::DistillDataset> hw, hr;
      if (!ts_hw.empty()) hw = distill::DistillDataset::load_file(ts_hw);
      if (!ts_hr.empty()) hr = distill::DistillDataset::load_file(ts_hr);
      train_student_from(w, hw ? &*hw : nullptr, ts_opt, common.seed).student.save_file(ts_wnet);
      train_student_from(r, hr ? &*hr : nullptr, ts_opt, common.seed + 1).student.save_file(ts_rnet);
      return 0;
    }

    if (re->parsed()) {
      if (!common.seed_given) throw std::invalid_argument("run-eval requires --seed");
      harness::ExperimentConfig cfg;
      cfg.geometry = g;
      cfg.channel = common.sos();
      cfg.weights = re_pri.weights();
      cfg.budget = re_pri.budget(common.seed);
      cfg.snr_test_db = re_snrs;
      cfg.schemes.clear();
      for (const auto& s : re_schemes) cfg.schemes.push_back(harness::parse_scheme(s));
      cfg.equalizer = re_eq == "zf" ? channel::Equalizer::ZeroForcing : channel::Equalizer::Mmse;
      cfg.history = re_pred.window;
      cfg.bootstrap_resamples = re_boot;
      cfg.seed = common.seed;
      cfg.threads = common.threads;
      cfg.validate();

      const auto all = load_data(re_data, g);
      const auto [train, test_all] = harness::split_train_test(all);
      const harness::Dataset test(test_all.begin(), test_all.begin() + static_cast<std::ptrdiff_t>(std::min(re_test, test_all.size())));

      bool need_pred = false, need_students = false;
      for (auto s : cfg.schemes) {
        need_pred = need_pred || harness::uses_prediction(s);
        need_students = need_students || harness::uses_students(s);
      }

      codec::Codec codec;
      if (codec_exists(re_codec_path)) {
        codec = codec::Codec::load(re_codec_path, g);
      } else {
        codec = train_codec_from(train, re_codec, common);
        if (!re_codec_path.empty()) codec.save(re_codec_path);
      }
      std::optional<predictor::ChannelPredictor> pred;
      if (need_pred) {
        if (!re_pred_path.empty() && fs::exists(re_pred_path)) {
          pred = predictor::ChannelPredictor(predictor::PredictorConfig{.window = re_pred.window}, nn::ParamSet::load_file(re_pred_path));
        } else {
          pred = train_predictor_from(re_pred, common).predictor;
          if (!re_pred_path.empty()) pred->params().save_file(re_pred_path);
        }
      }
      std::optional<distill::Student> wnet, rnet;
      if (need_students) {
        if (!re_wnet.empty() && !re_rnet.empty() && fs::exists(re_wnet) && fs::exists(re_rnet)) {
          wnet = distill::Student::load_file(re_wnet, g.feature_shape());
          rnet = distill::Student::load_file(re_rnet, g.feature_shape());
        } else {
          const std::size_t n_train = std::min(re_stud.images, train.size());
          const std::size_t n_hold = std::min(re_stud.holdout, train.size() - n_train);
          const harness::Dataset st(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_train));
          log_line("running teacher priority on ", n_train + n_hold, " training images");
          const auto tr = distill::build_distill_dataset(codec, st, cfg.budget, distill::Split::Train, common.threads);
          std::optional<distill::DistillPair> ho;
          if (n_hold) {
            const harness::Dataset sh(train.end() - static_cast<std::ptrdiff_t>(n_hold), train.end());
            ho = distill::build_distill_dataset(codec, sh, cfg.budget, distill::Split::Holdout, common.threads);
          }
          wnet = train_student_from(tr.importance, ho ? &ho->importance : nullptr, re_stud, common.seed).student;
          rnet = train_student_from(tr.robustness, ho ? &ho->robustness : nullptr, re_stud, common.seed + 1).student;
          if (!re_wnet.empty()) wnet->save_file(re_wnet);
          if (!re_rnet.empty()) rnet->save_file(re_rnet);
        }
      }

      harness::Models m;
      m.codec = &codec;
      m.predictor = pred ? &*pred : nullptr;
      m.wnet = wnet ? &*wnet : nullptr;
      m.rnet = rnet ? &*rnet : nullptr;
      m.weights = cfg.weights;
      m.budget = cfg.budget;
      m.equalizer = cfg.equalizer;
      m.power = cfg.power;
      log_line("evaluating ", cfg.schemes.size(), " schemes on ", test.size(), " images at ", cfg.snr_test_db.size(),
               " SNRs");
      const auto res = harness::run_eval_sweep(cfg, m, test, [&](std::size_t n) {
        if (n % 20 == 0 || n == test.size()) log_line("  ", n, "/", test.size(), " images");
      });
      std::ostringstream csv;
      harness::write_csv(csv, res);
      write_text(re_csv, csv.str());
      if (!re_json.empty()) write_text(re_json, harness::summary_json(cfg, res, test.size()).dump(2) + "\n");
      if (!re_jsonl.empty()) {
        std::ostringstream jl;
        harness::write_jsonl(jl, res);
        write_text(re_jsonl, jl.str());
      }
      return 0;
    }

    if (ep->parsed()) {
      const predictor::ChannelPredictor model(predictor::PredictorConfig{.window = ep_window}, nn::ParamSet::load_file(ep_pred));
      const auto rep = predictor::evaluate_horizon(model, common.sos(), ep_stream, ep_windows, ep_t2);
      std::ostringstream os;
      os << "horizon_step,nmse,persistence_nmse\n";
      for (std::size_t s = 0; s < ep_t2; ++s) {
        os << s + 1 << ',' << harness::format_number(rep.model_nmse[s]) << ','
           << harness::format_number(rep.persistence_nmse[s]) << '\n';
      }
      write_text(ep_csv, os.str());
      log_line("model beats persistence on ", rep.model_wins, "/", rep.windows, " windows");
      return 0;
    }

    if (cs->parsed()) {
      const auto st = channel::compute_channel_stats(common.sos(), cs_opt);
      nlohmann::json j;
      j["mean_power"] = st.mean_power;
      j["envelope_mean"] = st.envelope_mean;
      j["envelope_mean_theory"] = channel::rayleigh_envelope_mean();
      j["phase_hist"] = st.phase_hist;
      j["phase_chi2"] = st.phase_chi2;
      j["phase_p_value"] = st.phase_p_value;
      nlohmann::json curve = nlohmann::json::array();
      for (const auto& p : st.autocorr_curve) {
        curve.push_back({{"lag", p.lag}, {"empirical", p.empirical}, {"theory", p.theory}});
      }
      j["autocorr_curve"] = std::move(curve);
      j["max_autocorr_deviation"] = st.max_autocorr_deviation;
      write_text(cs_json, j.dump(2) + "\n");
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
