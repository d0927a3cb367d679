// reachmap: build, query, compress, compare and evaluate reachability maps.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime abort.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "reachmap/reachmap.hpp"

namespace rm = reachmap;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kRuntime = 3;

/// Configuration problem detected after parsing; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Work started but could not complete; maps to exit code 3.
struct RuntimeAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

rm::KinematicChain resolve_chain(const std::string& name) {
  if (name == "planar2r") return rm::chains::planar2r();
  if (name == "spatial6r") return rm::chains::spatial6r();
  if (!std::filesystem::exists(name)) {
    throw UsageError("unknown chain '" + name + "': expected planar2r, spatial6r or a chain file path");
  }
  return rm::load_chain_file(name);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) { return rm::io::read_file(path); }

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) { rm::io::write_file(path, bytes); }

std::optional<rm::Box> parse_box(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  if (v.size() != 6) throw UsageError("a box needs 6 values: xmin,xmax,ymin,ymax,zmin,zmax");
  rm::Box b;
  for (int d = 0; d < 3; ++d) {
    b.lo[d] = v[2 * d];
    b.hi[d] = v[2 * d + 1];
    if (!(b.lo[d] <= b.hi[d])) throw UsageError("box axis " + std::to_string(d) + " has min > max");
  }
  return b;
}

// ---------------------------------------------------------------------------
// build

struct BuildArgs {
  std::string chain;
  double delta = 0.05;
  double theta = 0.1;
  std::vector<double> bounds;
  std::uint64_t target = 1'000'000;
  double stop_ir = 0.01;
  std::size_t workers = 1;
  std::size_t batch = 10'000;
  std::size_t max_batch = 1'000'000;
  std::size_t sub_batch = 10'000;
  std::size_t queue = 8;
  std::uint64_t max_batches = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string report;
};

void add_build(CLI::App& app, BuildArgs& a) {
  auto* c = app.add_subcommand("build", "Sample poses and build a reachability map");
  c->add_option("--chain", a.chain, "Chain name (planar2r, spatial6r) or chain JSON path")->required();
  c->add_option("--delta", a.delta, "Cell size, m")->capture_default_str();
  c->add_option("--theta", a.theta, "Angular threshold, rad")->capture_default_str();
  c->add_option("--bounds", a.bounds, "xmin,xmax,ymin,ymax,zmin,zmax (default: base +- (reach + delta))")
      ->delimiter(',')
      ->expected(6);
  c->add_option("--target", a.target, "Stop after this many stored entries")->capture_default_str();
  c->add_option("--stop-ir", a.stop_ir, "Stop when the smoothed insertion rate drops below this")->capture_default_str();
  c->add_option("--workers", a.workers, "Producer threads; 0 samples on the consumer")->capture_default_str();
  c->add_option("--batch", a.batch, "Initial batch size")->capture_default_str();
  c->add_option("--max-batch", a.max_batch, "Largest adaptive batch")->capture_default_str();
  c->add_option("--sub-batch", a.sub_batch, "Producer sub-batch size")->capture_default_str();
  c->add_option("--queue", a.queue, "Queue capacity in sub-batches")->capture_default_str();
  c->add_option("--max-batches", a.max_batches, "Batch limit, 0 for none")->capture_default_str();
  c->add_option("--seed", a.seed, "Sampling seed")->capture_default_str();
  c->add_option("--out", a.out, "Output RMAP path")->required();
  c->add_option("--report", a.report, "Line-delimited JSON batch report path");
}

int run_build(const BuildArgs& a) {
  const rm::KinematicChain chain = resolve_chain(a.chain);
  rm::GridSpec spec;
  try {
    if (a.bounds.empty()) {
      spec = rm::default_workspace(chain, a.delta, a.theta);
    } else {
      const auto box = *parse_box(a.bounds);
      spec = rm::GridSpec::make(box.lo, box.hi, a.delta, a.theta);
    }
  } catch (const rm::InvalidParameter& e) {
    throw UsageError(e.what());
  }

  std::ofstream report;
  if (!a.report.empty()) {
    report.open(a.report, std::ios::trunc);
    if (!report) throw UsageError("cannot open report file '" + a.report + "'");
  }

  rm::BuildConfig cfg;
  cfg.chain = &chain;
  cfg.spec = spec;
  cfg.target = a.target;
  cfg.stop_rate = a.stop_ir;
  cfg.workers = a.workers;
  cfg.batch = a.batch;
  cfg.max_batch = a.max_batch;
  cfg.sub_batch = a.sub_batch;
  cfg.queue_capacity = a.queue;
  cfg.max_batches = a.max_batches;
  cfg.seed = a.seed;
  cfg.on_batch = [&](const rm::BatchReport& r) {
    if (!report.is_open()) return;
    report << json{{"ordinal", r.ordinal},
                   {"generated", r.generated},
                   {"accepted", r.accepted},
                   {"rejected", r.rejected},
                   {"out_of_bounds", r.out_of_bounds},
                   {"rate", r.rate},
                   {"cumulative", r.cumulative},
                   {"batch_seconds", r.batch_seconds},
                   {"elapsed", r.elapsed_seconds}}
                  .dump()
           << '\n';
    report.flush();
  };
  try {
    cfg.validate();
  } catch (const rm::InvalidParameter& e) {
    throw UsageError(e.what());
  }

  rm::BuildResult res = rm::build_map(cfg);
  rm::save_map(res.grid, a.out,
               rm::MapMeta{chain.name(), a.seed, res.grid.generated(), res.grid.inserted(), res.seconds});
  const auto st = rm::stats(res.grid);
  std::cerr << "stop=" << rm::to_string(res.reason) << " batches=" << res.reports.size()
            << " generated=" << st.generated << " inserted=" << st.inserted << " occupied=" << st.occupied_cells
            << " seconds=" << res.seconds << '\n';
  if (res.truncated) throw RuntimeAbort("build aborted: " + res.diagnostic);
  return kOk;
}

// ---------------------------------------------------------------------------
// query

struct QueryArgs {
  std::string map;
  std::string poses;
  std::string out = "-";
};

void add_query(CLI::App& app, QueryArgs& a) {
  auto* c = app.add_subcommand("query", "Answer reachability for a CSV of poses");
  c->add_option("--map", a.map, "RMAP path")->required();
  c->add_option("--poses", a.poses, "CSV rows x,y,z,qw,qx,qy,qz[,label[,provenance]]; - for stdin")->required();
  c->add_option("--out", a.out, "Verdict CSV path; - for stdout")->capture_default_str();
}

int run_query(const QueryArgs& a) {
  rm::ReachGrid grid = rm::load_map(a.map);
  grid.freeze();
  std::vector<rm::CsvPose> rows;
  if (a.poses == "-") {
    rows = rm::read_pose_csv(std::cin);
  } else {
    std::ifstream in(a.poses);
    if (!in) throw UsageError("cannot open pose file '" + a.poses + "'");
    rows = rm::read_pose_csv(in);
  }
  std::vector<rm::Pose> poses;
  poses.reserve(rows.size());
  for (const auto& r : rows) poses.push_back(r.pose);
  const auto res = rm::batch_query(grid, poses);

  std::ofstream file;
  if (a.out != "-") {
    file.open(a.out, std::ios::trunc);
    if (!file) throw UsageError("cannot open output '" + a.out + "'");
  }
  std::ostream& os = a.out == "-" ? std::cout : file;
  os.precision(9);
  os << "index,reachable,angular_error,witness\n";
  std::vector<bool> pred, labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& hit = res.results[i];
    os << i << ',' << (hit ? "reachable" : "unreachable") << ',';
    if (hit) {
      os << hit->angular_error << ',';
      for (std::size_t d = 0; d < hit->witness.size(); ++d) os << (d ? " " : "") << hit->witness[d];
    } else {
      os << ',';
    }
    os << '\n';
    if (rows[i].label) {
      pred.push_back(hit.has_value());
      labels.push_back(*rows[i].label);
    }
  }
  json summary{{"queries", rows.size()}, {"total_us", res.total_us}, {"per_query_us", res.per_query_us}};
  if (!labels.empty() && labels.size() == rows.size()) {
    const auto c = rm::confusion(pred, labels);
    summary["tp"] = c.tp;
    summary["fp"] = c.fp;
    summary["tn"] = c.tn;
    summary["fn"] = c.fn;
  }
  std::cerr << summary.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// compress

struct CompressArgs {
  std::string map;
  std::uint32_t samples = rm::kDefaultCoverageSamples;
  std::string out;
};

void add_compress(CLI::App& app, CompressArgs& a) {
  auto* c = app.add_subcommand("compress", "Per-cell orientation coverage of a map (RCMP)");
  c->add_option("--map", a.map, "RMAP path")->required();
  c->add_option("--samples", a.samples, "Sphere samples per cell (M)")->capture_default_str();
  c->add_option("--out", a.out, "Output RCMP path")->required();
}

int run_compress(const CompressArgs& a) {
  const rm::ReachGrid grid = rm::load_map(a.map);
  write_bytes(a.out, rm::serialize_coverage(rm::compress_map(grid, a.samples)));
  return kOk;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::string a, b;
  int scales = rm::kDefaultKernelScales;
  std::size_t cap = rm::kDefaultSubsampleCap;
  std::string out;
};

void add_compare(CLI::App& app, CompareArgs& a) {
  auto* c = app.add_subcommand("compare", "Per-cell MMD between two maps on the same grid (RSIM)");
  c->add_option("--a", a.a, "First RMAP path")->required();
  c->add_option("--b", a.b, "Second RMAP path")->required();
  c->add_option("--scales", a.scales, "Kernel scales (M_k)")->capture_default_str();
  c->add_option("--cap", a.cap, "Per-cell direction subsample cap")->capture_default_str();
  c->add_option("--out", a.out, "Output RSIM path")->required();
}

int run_compare(const CompareArgs& a) {
  const rm::ReachGrid ga = rm::load_map(a.a);
  const rm::ReachGrid gb = rm::load_map(a.b);
  write_bytes(a.out, rm::serialize_similarity(rm::similarity_grid(ga, gb, a.scales, a.cap)));
  return kOk;
}

// ---------------------------------------------------------------------------
// energy

struct EnergyArgs {
  std::string sim;
  std::string tau = "auto";
  double delta = 0.01;
  double sigma = 1.0;
  std::vector<std::string> base;
  std::string out;
  std::optional<std::uint32_t> slice;
  std::string slice_out = "-";
};

void add_energy(CLI::App& app, EnergyArgs& a) {
  auto* c = app.add_subcommand("energy", "Energy field from a similarity grid (RNRG)");
  c->add_option("--sim", a.sim, "RSIM path")->required();
  c->add_option("--tau", a.tau, "Seed threshold, or auto for the mean positive similarity")->capture_default_str();
  c->add_option("--delta", a.delta, "Wavefront increment per layer")->capture_default_str();
  c->add_option("--sigma", a.sigma, "Gaussian smoothing width in cells; 0 disables")->capture_default_str();
  c->add_option("--base", a.base,
                "Excluded base region xmin,xmax,ymin,ymax,zmin,zmax, or none (default: |x|,|y| <= 0.2)")
      ->delimiter(',');
  c->add_option("--out", a.out, "Output RNRG path")->required();
  c->add_option("--slice", a.slice, "Also dump this z slice as a text matrix");
  c->add_option("--slice-out", a.slice_out, "Slice dump path; - for stdout")->capture_default_str();
}

int run_energy(const EnergyArgs& a) {
  rm::EnergyParams p;
  if (a.tau != "auto") {
    try {
      std::size_t used = 0;
      p.tau = std::stod(a.tau, &used);
      if (used != a.tau.size()) throw std::invalid_argument(a.tau);
    } catch (const std::exception&) {
      throw UsageError("--tau must be a number or auto");
    }
  }
  p.delta = a.delta;
  p.sigma = a.sigma;
  if (a.base.size() == 1 && (a.base[0] == "none" || a.base[0] == "empty")) {
    p.base.reset();
  } else if (!a.base.empty()) {
    std::vector<double> v;
    for (const auto& s : a.base) {
      try {
        v.push_back(std::stod(s));
      } catch (const std::exception&) {
        throw UsageError("--base values must be numbers");
      }
    }
    p.base = parse_box(v);
  }
  const rm::SimilarityGrid sim = rm::deserialize_similarity(read_bytes(a.sim));
  rm::EnergyField f;
  try {
    f = rm::build_energy_field(sim, p);
  } catch (const rm::NoSeeds& e) {
    throw RuntimeAbort(e.what());
  }
  write_bytes(a.out, rm::serialize_energy(f));
  if (a.slice) {
    const std::string txt = rm::dump_z_slice(f, *a.slice);
    if (a.slice_out == "-") {
      std::cout << txt;
    } else {
      std::ofstream o(a.slice_out, std::ios::trunc);
      if (!o) throw UsageError("cannot open slice output '" + a.slice_out + "'");
      o << txt;
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string map;
  std::string chain;
  std::size_t size = 10'000;
  std::uint64_t seed = 1;
  std::vector<std::size_t> batches = rm::default_timing_batches();
  int reps = 5;
  int ik_restarts = 100;
  std::string test_set_out;
  std::string test_set_in;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Accuracy, TPR, FPR and batch query timing against a labeled test set");
  c->add_option("--map", a.map, "RMAP path")->required();
  c->add_option("--chain", a.chain, "Chain used to generate and label the test set");
  c->add_option("--size", a.size, "Generated test-set size")->capture_default_str();
  c->add_option("--seed", a.seed, "Test-set seed")->capture_default_str();
  c->add_option("--batches", a.batches, "Timing batch sizes")->delimiter(',')->capture_default_str();
  c->add_option("--reps", a.reps, "Timing repetitions per batch size")->capture_default_str();
  c->add_option("--ik-restarts", a.ik_restarts, "IK restarts for non-planar labels")->capture_default_str();
  c->add_option("--test-set", a.test_set_in, "Labeled CSV to evaluate instead of generating one");
  c->add_option("--write-test-set", a.test_set_out, "Write the generated test set as CSV");
}

int run_eval(const EvalArgs& a) {
  if (a.test_set_in.empty() == a.chain.empty()) throw UsageError("eval needs exactly one of --chain or --test-set");
  if (!a.test_set_in.empty() && !a.test_set_out.empty()) {
    throw UsageError("--write-test-set only applies to a generated test set");
  }
  if (a.reps < 1) throw UsageError("--reps must be >= 1");
  rm::ReachGrid grid = rm::load_map(a.map);
  grid.freeze();
  std::vector<rm::LabeledPose> set;
  if (!a.chain.empty()) {
    const auto chain = resolve_chain(a.chain);
    rm::TestSetOptions opt;
    opt.ik_restarts = a.ik_restarts;
    opt.floor_z = grid.spec().lo[2];
    set = rm::generate_test_set(chain, a.size, a.seed, opt);
    if (!a.test_set_out.empty()) {
      std::ofstream o(a.test_set_out, std::ios::trunc);
      if (!o) throw UsageError("cannot open '" + a.test_set_out + "'");
      rm::write_test_csv(o, set);
    }
  } else {
    std::ifstream in(a.test_set_in);
    if (!in) throw UsageError("cannot open test set '" + a.test_set_in + "'");
    for (const auto& r : rm::read_pose_csv(in)) {
      if (!r.label) throw UsageError("test set rows need a label column");
      set.push_back({r.pose, *r.label, r.provenance.value_or(rm::Provenance::kFkSample)});
    }
  }
  const auto m = rm::evaluate(grid, set, a.batches, a.reps);
  json timing = json::array();
  for (const auto& t : m.timing) {
    timing.push_back({{"batch", t.batch}, {"per_query_us", t.per_query_us}, {"total_us", t.total_us}});
  }
  const json out{{"size", set.size()}, {"tp", m.counts.tp},       {"fp", m.counts.fp},   {"tn", m.counts.tn},
                 {"fn", m.counts.fn},  {"accuracy", m.accuracy}, {"tpr", m.tpr},        {"fpr", m.fpr},
                 {"timing", timing}};
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reachability maps: build, query, compress, compare, energy, eval"};
  app.set_config("--config", "", "INI or TOML file with option defaults; flags override it");
  app.require_subcommand(1);
  app.get_formatter()->column_width(44);

  BuildArgs build;
  QueryArgs query;
  CompressArgs compress;
  CompareArgs compare;
  EnergyArgs energy;
  EvalArgs eval;
  add_build(app, build);
  add_query(app, query);
  add_compress(app, compress);
  add_compare(app, compare);
  add_energy(app, energy);
  add_eval(app, eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "build") return run_build(build);
    if (cmd == "query") return run_query(query);
    if (cmd == "compress") return run_compress(compress);
    if (cmd == "compare") return run_compare(compare);
    if (cmd == "energy") return run_energy(energy);
    if (cmd == "eval") return run_eval(eval);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const rm::InvalidParameter& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const rm::IncompatibleGrids& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const rm::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
