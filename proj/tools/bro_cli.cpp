// Command-line front end: orthogonality checks, benchmarks, training,
// certification, loss diagnostics and the conv-oracle suite.
// Exit codes: 0 success, 1 invariant failure, 2 usage error.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bro/bro.hpp"
#include "json.hpp"

using namespace bro;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kInvariant = 1;
constexpr int kUsage = 2;
constexpr int kJsonVersion = 1;
constexpr std::uint64_t kPinnedKaimingSeed = 12159447;

std::string sci(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << x;
  return os.str();
}

// JSON has no infinity; -1 marks an infinite value, as in certification reports.
double finite_or_sentinel(double x) { return std::isinf(x) ? -1.0 : x; }

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Output stream: the named file, or stdout for "" and "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw UsageError("cannot open " + path + " for writing");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

// ---------------------------------------------------------------- ortho-check

struct OrthoOptions {
  std::string method = "bro";
  std::size_t m = 8;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::size_t iters = 50;
  std::string init = "gaussian";
  bool json_out = false;
};

Tensor draw_parameter(const OrthoOptions& o, std::size_t cols) {
  if (o.init == "identity") {
    if (cols != o.m) throw UsageError("--init identity needs a square parameter");
    return Tensor::eye(o.m);
  }
  const bool kaiming = o.init == "kaiming";
  std::mt19937_64 rng(o.seed.value_or(kaiming ? kPinnedKaimingSeed : 0));
  const double std_dev = kaiming ? std::sqrt(2.0 / static_cast<double>(o.m)) : 1.0 / std::sqrt(static_cast<double>(o.m));
  return Tensor::randn({o.m, cols}, rng, std_dev);
}

int cmd_ortho_check(const OrthoOptions& o) {
  if (o.m == 0) throw UsageError("--m must be positive");
  json out = {{"version", kJsonVersion}, {"command", "ortho-check"}, {"method", o.method}, {"m", o.m},
              {"init", o.init}};
  bool pass = true;
  std::string text;
  if (o.method == "bro") {
    const std::size_t n = o.n.value_or(o.m / 2);
    if (n == 0 || n >= o.m)
      throw UsageError("degenerate BRO parameter: need 0 < n < m (got m=" + std::to_string(o.m) +
                       ", n=" + std::to_string(n) + "); n = m gives W = -I");
    if (o.init == "identity") throw UsageError("--init identity is only meaningful for lot");
    const Tensor w = bro_orthogonalize(BroParam(draw_parameter(o, n)));
    const RMat wm = to_mat(w);
    const double orth = orthogonality_error(wm);
    const double sym = (w - ops::transpose(w)).norm();
    std::size_t minus = 0, plus = 0;
    for (double ev : hermitian_eigenvalues(wm)) {
      if (std::abs(ev + 1.0) < 1e-8) ++minus;
      if (std::abs(ev - 1.0) < 1e-8) ++plus;
    }
    pass = orth < 1e-10 && sym < 1e-12 && minus == n && plus == o.m - n;
    out["n"] = n;
    out["orthogonality_error"] = orth;
    out["symmetry_error"] = sym;
    out["eigen_counts"] = {{"minus_one", minus}, {"plus_one", plus}};
    text = "orthogonality error " + sci(orth) + "\nsymmetry error " + sci(sym) +
           "\neigenvalues -1: " + std::to_string(minus) + ", +1: " + std::to_string(plus) + "\n";
  } else if (o.method == "cayley") {
    if (o.init == "identity") throw UsageError("--init identity is only meaningful for lot");
    const Tensor w = cayley_orthogonalize(draw_parameter(o, o.m));
    const double orth = orthogonality_error(to_mat(w));
    pass = orth < 1e-10;
    out["orthogonality_error"] = orth;
    text = "orthogonality error " + sci(orth) + "\n";
  } else if (o.method == "lot") {
    if (o.iters == 0) throw UsageError("--iters must be positive");
    const Tensor v = draw_parameter(o, o.m);
    out["iters"] = o.iters;
    try {
      const auto r = lot_orthogonalize(v, o.iters);
      const double last = r.condition.back();
      pass = last < 1.0 + 1e-6;
      json trace = json::array();
      for (double c : r.condition) trace.push_back(finite_or_sentinel(c));
      out["condition_trace"] = trace;
      out["final_condition"] = finite_or_sentinel(last);
      out["orthogonality_error"] = orthogonality_error(to_mat(r.w));
      out["converged"] = pass;
      text = "cond(W^T W) after " + std::to_string(o.iters) + " iterations: " + sci(last) + "\n" +
             (pass ? "converged\n" : "did not converge to 1\n");
    } catch (const DivergedError& e) {
      pass = false;
      out["converged"] = false;
      out["diverged_at"] = e.iteration();
      text = std::string(e.what()) + "\ndid not converge to 1\n";
    }
  } else {
    throw UsageError("unknown method '" + o.method + "' (bro, cayley, lot)");
  }
  out["pass"] = pass;
  if (o.json_out)
    std::cout << out.dump(2) << '\n';
  else
    std::cout << text << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kOk : kInvariant;
}

// ---------------------------------------------------------------------- bench

struct BenchOptions {
  std::vector<std::string> methods{"bro"};
  std::string phase = "param_transform";
  std::vector<std::size_t> channels{256};
  std::vector<std::size_t> spatial{16};
  std::vector<double> kappas{0.125, 0.25, 0.5, 0.75};
  std::size_t kernel = 3;
  std::size_t iters = 10;
  std::size_t batch = 1;
  std::size_t reps = kMinBenchReps;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_bench(const BenchOptions& o) {
  std::vector<BenchPhase> phases;
  if (o.phase == "param_transform" || o.phase == "both") phases.push_back(BenchPhase::param_transform);
  if (o.phase == "input_transform" || o.phase == "both") phases.push_back(BenchPhase::input_transform);
  if (phases.empty()) throw UsageError("unknown phase '" + o.phase + "'");
  std::vector<BenchCase> cases;
  for (const auto& name : o.methods) {
    const BenchMethod method = parse_bench_method(name);
    for (BenchPhase phase : phases)
      for (std::size_t c : o.channels)
        for (std::size_t s : o.spatial) {
          BenchCase bc;
          bc.method = method;
          bc.phase = phase;
          bc.channels = c;
          bc.spatial = s;
          bc.kernel = o.kernel;
          bc.lot_iters = o.iters;
          bc.batch = o.batch;
          bc.reps = o.reps;
          bc.seed = o.seed;
          if (method != BenchMethod::bro) {
            bc.rank = 0;
            cases.push_back(bc);
            continue;
          }
          for (double kappa : o.kappas) {
            if (!(kappa > 0.0 && kappa < 1.0)) throw UsageError("kappa must lie in (0, 1)");
            bc.rank = static_cast<std::size_t>(std::lround(kappa * static_cast<double>(c)));
            cases.push_back(bc);
          }
        }
  }
  for (const auto& c : cases) c.validate();  // all limits before any timing

  Output out(o.out);
  std::ostream& os = out.stream();
  os << kBenchCsvHeader << '\n';
  std::map<std::tuple<int, std::size_t, std::size_t>, std::vector<BenchResult>> bro_groups;
  for (const auto& c : cases) {
    const BenchResult r = run_bench(c);
    write_bench_csv(os, {r}, false);
    os.flush();
    if (c.method == BenchMethod::bro) bro_groups[{static_cast<int>(c.phase), c.channels, c.spatial}].push_back(r);
  }
  bool monotone = true;
  for (const auto& [key, rows] : bro_groups) {
    const bool ok = non_decreasing_medians(rows);
    monotone = monotone && ok;
    std::cerr << "bro " << bench_phase_name(static_cast<BenchPhase>(std::get<0>(key))) << " c=" << std::get<1>(key)
              << " s=" << std::get<2>(key) << ": median time " << (ok ? "non-decreasing" : "NOT monotone")
              << " in kappa\n";
  }
  return monotone ? kOk : kInvariant;
}

// --------------------------------------------------------------- train/certify

struct DataOptions {
  std::string kind = "blobs";
  std::size_t n = 256;
  std::size_t d = 16;
  std::size_t classes = 3;
  double separation = 2.0;
  double noise = 0.3;
  double bias_feature = 0.0;
  std::uint64_t seed = 0;

  json to_json() const {
    return {{"kind", kind},   {"n", n},         {"d", d},       {"classes", classes}, {"separation", separation},
            {"noise", noise}, {"bias_feature", bias_feature}, {"seed", seed}};
  }
  static DataOptions from_json(const json& j) {
    DataOptions o;
    o.kind = j.at("kind");
    o.n = j.at("n");
    o.d = j.at("d");
    o.classes = j.at("classes");
    o.separation = j.at("separation");
    o.noise = j.at("noise");
    o.bias_feature = j.at("bias_feature");
    o.seed = j.at("seed");
    return o;
  }
};

// Generates the dataset and shapes it for the model family.
Dataset make_data(const DataOptions& o, const std::string& model) {
  if (o.n == 0) throw UsageError("--n must be positive");
  const ToyKind kind = parse_toy_kind(o.kind);
  Dataset ds = toy_dataset(kind, o.n, o.d, o.seed, {o.classes, o.separation, o.noise});
  if (model == "lipconvnet") {
    if (o.bias_feature != 0.0) throw UsageError("--bias-feature applies to flat models only");
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(o.d))));
    if (side * side != o.d) throw UsageError("lipconvnet needs d to be a perfect square (input 1 x s x s)");
    return ds.reshaped({1, side, side});
  }
  if (model != "bronet") throw UsageError("unknown model '" + model + "' (lipconvnet, bronet)");
  return o.bias_feature != 0.0 ? with_constant_feature(ds, o.bias_feature) : ds;
}

struct TrainOptions {
  std::string model = "lipconvnet";
  std::size_t width = 8;
  std::size_t features = 32;
  std::size_t blocks = 2;
  DataOptions data;
  std::uint64_t seed = 0;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double lr = 0.05;
  std::string schedule = "constant";
  double momentum = 0.9;
  std::string loss = "la";
  LossConfig loss_cfg;
  std::vector<double> radii{0.0, 0.1, 0.25, 0.5};
  std::string checkpoint;
  std::string log;
};

int cmd_train(const TrainOptions& o) {
  const Dataset ds = make_data(o.data, o.model);
  const auto specs = o.model == "lipconvnet" ? lipconvnet_mini(ds.classes, o.width, o.features)
                                             : bronet_mini(ds.classes, o.width, o.blocks);
  Model m = build_model(ds.sample_shape, specs, o.seed);
  TrainConfig cfg;
  cfg.seed = o.seed;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.lr = o.lr;
  if (o.schedule == "cosine")
    cfg.schedule = Schedule::cosine;
  else if (o.schedule != "constant")
    throw UsageError("unknown schedule '" + o.schedule + "' (constant, cosine)");
  cfg.momentum = o.momentum;
  cfg.loss = parse_loss_kind(o.loss);
  cfg.loss_cfg = o.loss_cfg;
  cfg.radii = o.radii;
  cfg.validate();

  Output out(o.log);
  std::ostream& os = out.stream();
  const TrainLog log = train(m, ds, cfg);
  for (const auto& e : log.epochs)
    os << json{{"version", kJsonVersion},
               {"epoch", e.epoch},
               {"loss", e.loss},
               {"clean_accuracy", e.clean_accuracy},
               {"mean_margin", e.mean_margin},
               {"radii", cfg.radii},
               {"certified_accuracy", e.certified},
               {"grad_ratio_min", e.grad_ratio_min},
               {"grad_ratio_max", e.grad_ratio_max}}
              .dump()
       << '\n';
  if (!o.checkpoint.empty()) {
    const json meta = {{"model", o.model},
                       {"data", o.data.to_json()},
                       {"loss", o.loss},
                       {"epochs", o.epochs},
                       {"lr", o.lr}};
    save_checkpoint(o.checkpoint, m, meta);
  }
  return kOk;
}

struct CertifyOptions {
  std::string checkpoint;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> n;
  std::vector<double> grid{0.0, 0.05, 0.1, 0.25, 0.5, 1.0};
  std::string out;
};

int cmd_certify(const CertifyOptions& o) {
  LoadedCheckpoint ck;
  try {
    ck = load_checkpoint_file(o.checkpoint);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  if (!ck.metadata.contains("data") || !ck.metadata.contains("model"))
    throw UsageError("checkpoint carries no dataset description; train it with this tool");
  DataOptions data = DataOptions::from_json(ck.metadata.at("data"));
  if (o.data_seed) data.seed = *o.data_seed;
  if (o.n) data.n = *o.n;
  const Dataset ds = make_data(data, ck.metadata.at("model").get<std::string>());
  if (ds.sample_shape != ck.model.input_shape) throw UsageError("dataset shape does not match the checkpoint");
  if (!std::is_sorted(o.grid.begin(), o.grid.end())) throw UsageError("--radius-grid must be ascending");
  CertificationReport rep;
  try {
    rep = certify(ck.model, ds.x, ds.y, o.grid);
  } catch (const std::logic_error& e) {
    std::cerr << "certify: " << e.what() << '\n';
    return kInvariant;
  }
  Output out(o.out);
  write_report(out.stream(), rep);
  return kOk;
}

// ---------------------------------------------------------------- loss-curves

struct CurveOptions {
  LossConfig cfg;
  double lo = 0.01;
  double hi = 0.99;
  std::size_t points = 99;
  std::string out;
};

int cmd_loss_curves(const CurveOptions& o) {
  o.cfg.validate();
  if (!(o.lo > 0.0 && o.hi < 1.0 && o.lo < o.hi)) throw UsageError("need 0 < --lo < --hi < 1");
  Output out(o.out);
  write_loss_curves_csv(out.stream(), loss_curves(o.cfg, uniform_grid(o.lo, o.hi, o.points)));
  return kOk;
}

// --------------------------------------------------------------- conv-oracle

struct OracleOptions {
  std::size_t max_c = 8;
  std::size_t max_s = 8;
  std::uint64_t seed = 0;
  bool json_out = false;
};

int cmd_conv_oracle(const OracleOptions& o) {
  if (o.max_c == 0 || o.max_s < 2) throw UsageError("need --max-c >= 1 and --max-s >= 2");
  if (o.max_c > 8 || o.max_s > 8) throw UsageError("--max-c and --max-s are capped at 8");
  const auto cases = conv_oracle_suite(o.max_c, o.max_s, o.seed);
  std::size_t failed = 0;
  double worst_apply = 0.0, worst_orth = 0.0;
  json rows = json::array();
  for (const auto& r : cases) {
    const bool ok = conv_oracle_passes(r);
    failed += !ok;
    worst_apply = std::max(worst_apply, r.apply_error);
    worst_orth = std::max(worst_orth, r.orth_error);
    rows.push_back({{"c", r.channels},
                    {"s", r.spatial},
                    {"n", r.rank},
                    {"apply_error", r.apply_error},
                    {"orth_error", r.orth_error},
                    {"pass", ok}});
  }
  if (o.json_out) {
    std::cout << json{{"version", kJsonVersion}, {"command", "conv-oracle"}, {"tolerance", kConvOracleTolerance},
                      {"cases", rows}, {"failed", failed}, {"pass", failed == 0}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << cases.size() << " cases, " << failed << " failed\n"
              << "max relative apply error " << worst_apply << "\nmax orthogonality error " << worst_orth << '\n'
              << (failed ? "FAIL" : "PASS") << '\n';
  }
  return failed ? kInvariant : kOk;
}

void add_loss_flags(CLI::App* app, LossConfig& cfg) {
  app->add_option("--T", cfg.temperature, "LA temperature")->capture_default_str();
  app->add_option("--xi", cfg.offset, "LA target logit offset")->capture_default_str();
  app->add_option("--beta", cfg.anneal, "LA annealing exponent")->capture_default_str();
  app->add_option("--gamma", cfg.cr_weight, "certificate regularization weight")->capture_default_str();
  app->add_option("--tau", cfg.ramp_width, "ramp width")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block reflector orthogonal layers: checks, training, certification and benchmarks"};
  app.require_subcommand(1);

  OrthoOptions ortho;
  auto* oc = app.add_subcommand("ortho-check", "verify orthogonality invariants of one parameterization");
  oc->add_option("--method", ortho.method, "bro, cayley or lot")->capture_default_str();
  oc->add_option("--m", ortho.m, "operator dimension")->capture_default_str();
  oc->add_option("--n", ortho.n, "BRO rank (default m/2)");
  oc->add_option("--seed", ortho.seed, "parameter seed (kaiming default: pinned ill-conditioned draw)");
  oc->add_option("--iters", ortho.iters, "LOT Newton iterations")->capture_default_str();
  oc->add_option("--init", ortho.init, "gaussian, kaiming or identity")->capture_default_str();
  oc->add_flag("--json", ortho.json_out, "machine-readable output");

  BenchOptions bench;
  auto* bc = app.add_subcommand("bench", "time parameter and input transforms");
  bc->add_option("--methods", bench.methods, "bro, cayley, lot")->delimiter(',')->capture_default_str();
  bc->add_option("--phase", bench.phase, "param_transform, input_transform or both")->capture_default_str();
  bc->add_option("--c", bench.channels, "channel counts (dense dimension when --s 0)")
      ->delimiter(',')
      ->capture_default_str();
  bc->add_option("--s", bench.spatial, "spatial sizes, 0 for a dense operator")->delimiter(',')->capture_default_str();
  bc->add_option("--kappa", bench.kappas, "BRO rank factors n / c")->delimiter(',')->capture_default_str();
  bc->add_option("--k", bench.kernel, "kernel size")->capture_default_str();
  bc->add_option("--iters", bench.iters, "LOT iterations")->capture_default_str();
  bc->add_option("--batch", bench.batch, "input transform batch")->capture_default_str();
  bc->add_option("--reps", bench.reps, "timed repetitions (>= 10)")->capture_default_str();
  bc->add_option("--seed", bench.seed)->capture_default_str();
  bc->add_option("--out", bench.out, "CSV path (default stdout)");

  TrainOptions tr;
  auto* tc = app.add_subcommand("train", "train a toy model and write a checkpoint");
  tc->add_option("--model", tr.model, "lipconvnet or bronet")->capture_default_str();
  tc->add_option("--width", tr.width)->capture_default_str();
  tc->add_option("--features", tr.features, "lipconvnet projection width")->capture_default_str();
  tc->add_option("--blocks", tr.blocks, "bronet dense blocks")->capture_default_str();
  tc->add_option("--data", tr.data.kind, "blobs or two_rings")->capture_default_str();
  tc->add_option("--n", tr.data.n, "samples")->capture_default_str();
  tc->add_option("--d", tr.data.d, "input dimension")->capture_default_str();
  tc->add_option("--classes", tr.data.classes)->capture_default_str();
  tc->add_option("--separation", tr.data.separation)->capture_default_str();
  tc->add_option("--noise", tr.data.noise)->capture_default_str();
  tc->add_option("--bias-feature", tr.data.bias_feature, "append a constant input coordinate (0: off)")
      ->capture_default_str();
  tc->add_option("--data-seed", tr.data.seed)->capture_default_str();
  tc->add_option("--seed", tr.seed, "initialization and shuffling seed")->capture_default_str();
  tc->add_option("--epochs", tr.epochs)->capture_default_str();
  tc->add_option("--batch", tr.batch)->capture_default_str();
  tc->add_option("--lr", tr.lr)->capture_default_str();
  tc->add_option("--schedule", tr.schedule, "constant or cosine")->capture_default_str();
  tc->add_option("--momentum", tr.momentum)->capture_default_str();
  tc->add_option("--loss", tr.loss, "la, ce or ce_cr")->capture_default_str();
  add_loss_flags(tc, tr.loss_cfg);
  tc->add_option("--radii", tr.radii, "radii for the certified accuracy log")->delimiter(',')->capture_default_str();
  tc->add_option("--checkpoint", tr.checkpoint, "checkpoint path");
  tc->add_option("--log", tr.log, "JSONL epoch log path (default stdout)");

  CertifyOptions cert;
  auto* cc = app.add_subcommand("certify", "certify a checkpoint on its dataset");
  cc->add_option("--checkpoint", cert.checkpoint)->required();
  cc->add_option("--data-seed", cert.data_seed, "dataset seed (default: training seed)");
  cc->add_option("--n", cert.n, "samples (default: training size)");
  cc->add_option("--radius-grid", cert.grid, "ascending radii")->delimiter(',')->capture_default_str();
  cc->add_option("--out", cert.out, "report path (default stdout)");

  CurveOptions curves;
  auto* lc = app.add_subcommand("loss-curves", "loss values and derivatives against p_t");
  add_loss_flags(lc, curves.cfg);
  lc->add_option("--lo", curves.lo)->capture_default_str();
  lc->add_option("--hi", curves.hi)->capture_default_str();
  lc->add_option("--points", curves.points)->capture_default_str();
  lc->add_option("--out", curves.out, "CSV path (default stdout)");

  OracleOptions oracle;
  auto* vc = app.add_subcommand("conv-oracle", "compare FFT convolution with explicit matrices");
  vc->add_option("--max-c", oracle.max_c)->capture_default_str();
  vc->add_option("--max-s", oracle.max_s)->capture_default_str();
  vc->add_option("--seed", oracle.seed)->capture_default_str();
  vc->add_flag("--json", oracle.json_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*oc) return cmd_ortho_check(ortho);
    if (*bc) return cmd_bench(bench);
    if (*tc) return cmd_train(tr);
    if (*cc) return cmd_certify(cert);
    if (*lc) return cmd_loss_curves(curves);
    if (*vc) return cmd_conv_oracle(oracle);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {  // ContractError, ShapeError
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kInvariant;
  }
  return kUsage;
}
