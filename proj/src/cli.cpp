#include "flexdti/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "flexdti/error.hpp"
#include "flexdti/io_formats.hpp"
#include "flexdti/lls_fit.hpp"
#include "flexdti/metrics.hpp"
#include "flexdti/random.hpp"
#include "flexdti/scheme.hpp"

namespace flexdti::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTagTrain = 1, kTagVal = 2, kTagTest = 3, kTagScheme = 4, kTagNoise = 5;

const char* const kSplits[] = {"train", "val", "test"};
const char* const kMapNames[] = {"fa", "md", "ad", "rd"};
constexpr double kDiffusivityWindow = 3e-3;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); }

template <typename T>
T typed(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    config_error("config key '" + key + "' has the wrong type");
  }
}

void check_object(const json& j, const std::string& key) {
  if (!j.is_object()) config_error("config key '" + key + "' must be an object");
}

Range range_from(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 2) config_error("config key '" + key + "' must be [lo, hi]");
  return {typed<double>(v[0], key), typed<double>(v[1], key)};
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonPositiveSignal:
    case ErrorCode::RankDeficient:
    case ErrorCode::ZeroB0Mean:
      return kExitNumerical;
    default:
      return kExitUsage;
  }
}

/// Single-instance guard for an output directory; the lock file is removed on exit.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw Error(ErrorCode::IoError,
                  "output directory " + dir.string() + " is in use (delete " + path_.string() + " if no run is active)");
    }
    ::close(fd);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = item.find_last_not_of(" \t");
    const std::string t = item.substr(first, last - first + 1);
    int v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
      config_error(std::string(what) + ": '" + t + "' is not an integer");
    }
    out.push_back(v);
  }
  if (out.empty()) config_error(std::string(what) + " is empty");
  return out;
}

struct StoredSplit {
  std::vector<DwiVolume> dwi;
  std::vector<TensorField> truth;
};

struct StoredData {
  GradientScheme scheme;
  int train_pool = 0;
  std::map<std::string, StoredSplit> splits;
};

fs::path data_dir(const fs::path& run) { return run / "data"; }

StoredData load_data(const fs::path& run, std::initializer_list<const char*> splits) {
  const fs::path dir = data_dir(run);
  StoredData d;
  json info;
  try {
    info = json::parse(read_file(dir / "dataset.json"));
    d.train_pool = info.at("train_pool").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HeaderJsonInvalid, "dataset.json: " + std::string(e.what()));
  }
  d.scheme = read_bvals_bvecs(dir / "bvals", dir / "bvecs");
  for (const char* s : splits) {
    StoredSplit sp;
    sp.dwi = dwi_from_volume(read_volume(dir / (std::string(s) + "_dwi.dwiv")), d.scheme);
    sp.truth = tensors_from_volume(read_volume(dir / (std::string(s) + "_truth.dwiv")));
    if (sp.dwi.size() != sp.truth.size()) {
      throw Error(ErrorCode::ShapeMismatch, std::string(s) + ": acquisition and ground truth slice counts differ");
    }
    d.splits.emplace(s, std::move(sp));
  }
  return d;
}

Dataset to_dataset(const StoredSplit& sp, const StoredData& d) {
  Dataset ds;
  ds.scheme = d.scheme;
  for (int i = 0; i < d.train_pool; ++i) ds.pool.push_back(i);
  for (std::size_t k = 0; k < sp.dwi.size(); ++k) ds.slices.push_back({sp.truth[k], sp.dwi[k]});
  return ds;
}

fs::path run_dir(const RunConfig& cfg, const std::string& out_flag) {
  return out_flag.empty() ? cfg.output : fs::path(out_flag);
}

// ---- subcommands --------------------------------------------------------

int cmd_scheme(int n, std::uint64_t seed, const fs::path& out_dir, std::ostream& out) {
  const GradientScheme s = generate_uniform(n, seed);
  DirLock lock(out_dir);
  write_bvals_bvecs(s, out_dir / "bvals", out_dir / "bvecs");
  char line[160];
  std::snprintf(line, sizeof line, "directions=%d kappa=%.6f min_angle_deg=%.6f\n", n, condition_number(s),
                min_line_angle_deg(s.directions));
  out << line;
  return kExitOk;
}

int cmd_phantom(const RunConfig& cfg, const fs::path& run, std::ostream& out, std::ostream& err) {
  DirLock lock(run);
  const fs::path dir = data_dir(run);
  fs::create_directories(dir);

  GradientScheme scheme = generate_uniform(cfg.scheme_directions, hash_key({cfg.seed, kTagScheme}));
  scheme.b = BValue(cfg.b_value);
  scheme.n_b0 = cfg.n_b0;
  write_bvals_bvecs(scheme, dir / "bvals", dir / "bvecs");

  const int counts[] = {cfg.train_slices, cfg.val_slices, cfg.test_slices};
  const std::uint64_t tags[] = {kTagTrain, kTagVal, kTagTest};
  for (int s = 0; s < 3; ++s) {
    std::vector<TensorField> truth;
    std::vector<DwiVolume> dwi;
    for (int k = 0; k < counts[s]; ++k) {
      PhantomSpec ps = cfg.phantom;
      ps.layout = cfg.layouts[static_cast<std::size_t>(k) % cfg.layouts.size()];
      ps.seed = hash_key({cfg.seed, tags[s], static_cast<std::uint64_t>(k)});
      truth.push_back(make_tensor_field(ps));
      dwi.push_back(synthesize_dwi(truth.back(), scheme, cfg.noise,
                                   hash_key({cfg.seed, kTagNoise, tags[s], static_cast<std::uint64_t>(k)})));
    }
    if (!truth.empty()) {
      write_volume(dir / (std::string(kSplits[s]) + "_truth.dwiv"), volume_from_tensors(truth));
      write_volume(dir / (std::string(kSplits[s]) + "_dwi.dwiv"), volume_from_dwi(dwi));
    }
    err << "phantom: " << kSplits[s] << " " << counts[s] << " slices\n";
  }
  const json info = {{"directions", cfg.scheme_directions},
                     {"slices", {{"test", cfg.test_slices}, {"train", cfg.train_slices}, {"val", cfg.val_slices}}},
                     {"train_pool", cfg.train_pool}};
  write_file(dir / "dataset.json", info.dump(2) + "\n");
  out << "wrote " << cfg.train_slices << " train, " << cfg.val_slices << " val, " << cfg.test_slices
      << " test slices to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& run, std::ostream& out, std::ostream& err) {
  DirLock lock(run);
  const bool has_val = cfg.val_slices > 0;
  const StoredData data = has_val ? load_data(run, {"train", "val"}) : load_data(run, {"train"});
  const Dataset train_set = to_dataset(data.splits.at("train"), data);
  std::optional<Dataset> val_set;
  if (has_val) val_set = to_dataset(data.splits.at("val"), data);

  const fs::path dir = run / "train";
  fs::create_directories(dir);
  std::string csv = loss_csv_header() + "\n";
  const auto t0 = std::chrono::steady_clock::now();
  const Checkpoint ck = train(train_set, val_set ? &*val_set : nullptr, cfg.net, [&](const EpochReport& r) {
    csv += loss_csv_row(r) + "\n";
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[200];
    std::snprintf(line, sizeof line, "train: epoch %d/%d lr=%.3g loss=%.6f val=%.6f (%.0f s)\n", r.epoch,
                  cfg.net.epochs, r.lr, r.train_loss, r.val_loss, secs);
    err << line << std::flush;
  });
  write_file(dir / "loss.csv", csv);
  save_checkpoint(dir / "checkpoint.fdti", ck);
  out << "checkpoint: " << (dir / "checkpoint.fdti").string() << "\n";
  return kExitOk;
}

void append_maps(std::map<std::string, std::vector<double>>& dst, const DtiMaps& m) {
  for (const char* name : kMapNames) {
    const auto& v = m.by_name(name);
    auto& d = dst[name];
    d.insert(d.end(), v.begin(), v.end());
  }
}

void render_all(const fs::path& dir, const std::string& prefix, const DtiMaps& m) {
  for (const char* name : kMapNames) {
    const Window w = std::string(name) == "fa" ? Window{0.0, 1.0} : Window{0.0, kDiffusivityWindow};
    write_file(dir / (prefix + name + ".pgm"), render_gray(m.by_name(name), m.mask, m.nx, m.ny, w));
  }
  write_file(dir / (prefix + "dec.ppm"), render_dec(m.dec, m.mask, m.nx, m.ny));
}

int cmd_eval(const fs::path& run, const fs::path& checkpoint_path, const std::vector<int>& dirs,
             std::uint64_t subset_seed, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(checkpoint_path.empty() ? run / "train" / "checkpoint.fdti" : checkpoint_path);
  DirLock lock(run);
  const StoredData data = load_data(run, {"test"});
  const StoredSplit& test = data.splits.at("test");
  const int test_pool = static_cast<int>(data.scheme.size()) - data.train_pool;
  for (int d : dirs) {
    if (d < 6 || d > ck.config.n_max) {
      config_error("direction count " + std::to_string(d) + " outside [6, " + std::to_string(ck.config.n_max) + "]");
    }
    if (d > test_pool) config_error("direction count " + std::to_string(d) + " exceeds the test pool");
  }
  std::vector<int> pool;
  for (int i = data.train_pool; i < static_cast<int>(data.scheme.size()); ++i) pool.push_back(i);

  const fs::path dir = run / "eval";
  const fs::path maps_dir = dir / "maps";
  fs::create_directories(maps_dir);

  std::map<std::string, std::vector<double>> truth_maps;
  Mask mask;
  std::vector<DtiMaps> truth_per_slice;
  for (const auto& t : test.truth) {
    truth_per_slice.push_back(compute_maps(t));
    append_maps(truth_maps, truth_per_slice.back());
    mask.insert(mask.end(), t.mask.begin(), t.mask.end());
  }
  render_all(maps_dir, "truth_", truth_per_slice.front());

  std::string csv = metrics_csv_header() + "\n";
  for (int d : dirs) {
    std::map<std::string, std::vector<double>> net_maps, lls_maps;
    for (std::size_t i = 0; i < test.dwi.size(); ++i) {
      const std::vector<int> subset = sample_subset(pool, d, hash_key({subset_seed, static_cast<std::uint64_t>(d), i}));
      const DtiMaps net = compute_maps(infer(test.dwi[i], subset, ck));
      const DtiMaps lls = compute_maps(fit_volume(test.dwi[i], std::span<const int>(subset)).fitted);
      append_maps(net_maps, net);
      append_maps(lls_maps, lls);
      if (i == 0) {
        render_all(maps_dir, "flexdti_d" + std::to_string(d) + "_", net);
        render_all(maps_dir, "lls_d" + std::to_string(d) + "_", lls);
      }
    }
    for (const char* method : {"flexdti", "lls"}) {
      auto& est = std::string(method) == "flexdti" ? net_maps : lls_maps;
      for (const char* name : kMapNames) {
        csv += metrics_csv_row(name, method, d, evaluate(est[name], truth_maps[name], mask)) + "\n";
      }
    }
    err << "eval: d=" << d << " done\n";
  }
  write_file(dir / "metrics.csv", csv);
  out << csv;
  return kExitOk;
}

int cmd_fit(const fs::path& volume, fs::path bvals, fs::path bvecs, const std::string& subset_text,
            const fs::path& truth_path, int slice, const fs::path& out_dir, std::ostream& out) {
  if (bvals.empty()) bvals = volume.parent_path() / "bvals";
  if (bvecs.empty()) bvecs = volume.parent_path() / "bvecs";
  const GradientScheme scheme = read_bvals_bvecs(bvals, bvecs);
  const std::vector<DwiVolume> slices = dwi_from_volume(read_volume(volume), scheme);
  std::optional<std::vector<int>> subset;
  if (!subset_text.empty()) {
    subset = parse_int_list(subset_text, "--subset");
    for (int k : *subset) {
      if (k < 0 || static_cast<std::size_t>(k) >= scheme.size()) {
        throw Error(ErrorCode::SubsetOutOfRange, "direction index " + std::to_string(k) + " out of range");
      }
    }
  }
  if (slice < 0 || static_cast<std::size_t>(slice) >= slices.size()) config_error("--slice out of range");
  std::vector<TensorField> truth;
  if (!truth_path.empty()) {
    truth = tensors_from_volume(read_volume(truth_path));
    if (truth.size() != slices.size()) throw Error(ErrorCode::ShapeMismatch, "truth and volume slice counts differ");
  }

  DirLock lock(out_dir);
  std::vector<TensorField> fitted;
  std::size_t clamped = 0, failed = 0;
  for (const auto& v : slices) {
    FitReport r = subset ? fit_volume(v, std::span<const int>(*subset)) : fit_volume(v);
    clamped += r.clamped_voxels;
    failed += r.failed_voxels;
    fitted.push_back(std::move(r.fitted));
  }
  write_volume(out_dir / "tensors.dwiv", volume_from_tensors(fitted));
  render_all(out_dir, "", compute_maps(fitted[static_cast<std::size_t>(slice)]));
  const int n_dirs = subset ? static_cast<int>(subset->size()) : static_cast<int>(scheme.size());
  out << "fitted " << slices.size() << " slices with " << n_dirs << " directions; clamped voxels " << clamped
      << ", failed voxels " << failed << "\n";

  if (!truth.empty()) {
    std::map<std::string, std::vector<double>> est, ref;
    Mask mask;
    for (std::size_t k = 0; k < fitted.size(); ++k) {
      append_maps(est, compute_maps(fitted[k]));
      append_maps(ref, compute_maps(truth[k]));
      mask.insert(mask.end(), truth[k].mask.begin(), truth[k].mask.end());
    }
    std::string csv = metrics_csv_header() + "\n";
    for (const char* name : kMapNames) {
      const MetricReport m = evaluate(est[name], ref[name], mask);
      csv += metrics_csv_row(name, "lls", n_dirs, m) + "\n";
      char line[96];
      std::snprintf(line, sizeof line, "%s_nrmse=%.3e\n", name, m.nrmse);
      out << line;
    }
    write_file(out_dir / "metrics.csv", csv);
  }
  return kExitOk;
}

}  // namespace

void RunConfig::validate() const {
  phantom.validate();
  if (layouts.empty()) config_error("phantom.layout must name at least one layout");
  if (scheme_directions < 6) config_error("scheme.directions must be at least 6");
  if (train_pool < 6 || train_pool >= scheme_directions) {
    config_error("scheme.train_pool must be in [6, scheme.directions - 1]");
  }
  if (n_b0 < 1) config_error("scheme.n_b0 must be at least 1");
  if (!(b_value > 0.0)) config_error("scheme.b must be positive");
  if (!(noise.s0 > 0.0) || !(noise.sigma >= 0.0)) config_error("noise.s0 must be positive and noise.sigma >= 0");
  if (train_slices < 1 || val_slices < 0 || test_slices < 1) {
    config_error("slices: train and test need at least 1, val at least 0");
  }
  net.validate();
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  check_object(j, "<root>");
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") {
      c.seed = typed<std::uint64_t>(v, key);
    } else if (key == "output") {
      c.output = typed<std::string>(v, key);
    } else if (key == "phantom") {
      check_object(v, key);
      for (const auto& [k, x] : v.items()) {
        const std::string name = "phantom." + k;
        if (k == "nx") c.phantom.nx = typed<int>(x, name);
        else if (k == "ny") c.phantom.ny = typed<int>(x, name);
        else if (k == "layout") {
          c.layouts.clear();
          try {
            if (x.is_string()) {
              c.layouts.push_back(layout_from_string(x.get<std::string>()));
            } else {
              for (const auto& l : x) c.layouts.push_back(layout_from_string(typed<std::string>(l, name)));
            }
          } catch (const Error& e) {
            config_error(name + ": " + e.what());
          }
        } else if (k == "lambda_parallel") c.phantom.lambda_parallel = range_from(x, name);
        else if (k == "lambda_perpendicular") c.phantom.lambda_perpendicular = range_from(x, name);
        else if (k == "lambda_tissue") c.phantom.lambda_tissue = range_from(x, name);
        else if (k == "lambda_free") c.phantom.lambda_free = range_from(x, name);
        else config_error("unknown config key '" + name + "'");
      }
    } else if (key == "scheme") {
      check_object(v, key);
      for (const auto& [k, x] : v.items()) {
        const std::string name = "scheme." + k;
        if (k == "directions") c.scheme_directions = typed<int>(x, name);
        else if (k == "n_b0") c.n_b0 = typed<int>(x, name);
        else if (k == "train_pool") c.train_pool = typed<int>(x, name);
        else if (k == "b") {
          if (x.is_array()) {
            if (x.empty()) config_error(name + " is empty");
            const double b0 = typed<double>(x[0], name);
            for (const auto& b : x) {
              if (typed<double>(b, name) != b0) throw Error(ErrorCode::MultiShell, name + ": only one shell is supported");
            }
            c.b_value = b0;
          } else {
            c.b_value = typed<double>(x, name);
          }
        } else config_error("unknown config key '" + name + "'");
      }
    } else if (key == "noise") {
      check_object(v, key);
      for (const auto& [k, x] : v.items()) {
        const std::string name = "noise." + k;
        if (k == "s0") c.noise.s0 = typed<double>(x, name);
        else if (k == "sigma") c.noise.sigma = typed<double>(x, name);
        else config_error("unknown config key '" + name + "'");
      }
    } else if (key == "slices") {
      check_object(v, key);
      for (const auto& [k, x] : v.items()) {
        const std::string name = "slices." + k;
        if (k == "train") c.train_slices = typed<int>(x, name);
        else if (k == "val") c.val_slices = typed<int>(x, name);
        else if (k == "test") c.test_slices = typed<int>(x, name);
        else config_error("unknown config key '" + name + "'");
      }
    } else if (key == "net") {
      check_object(v, key);
      try {
        c.net = net_config_from_json(v);
      } catch (const Error& e) {
        config_error(std::string("net: ") + e.what());
      }
      c.net_seed_set = v.contains("seed");
    } else {
      config_error("unknown config key '" + key + "'");
    }
  }
  if (c.output.is_relative()) c.output = base_dir / c.output;
  if (!c.net_seed_set) c.net.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    config_error(path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"FlexDTI: tensor estimation from flexible gradient schemes on synthetic phantoms"};
  app.require_subcommand(1);

  int n = 0;
  std::uint64_t seed = 0;
  std::string out_dir, config_path, dirs_text = "6,8,12,20", checkpoint, volume, bvals, bvecs, subset, truth;
  std::uint64_t subset_seed = 0;
  int slice = 0;
  bool resume = false;

  auto* scheme = app.add_subcommand("scheme", "Generate a uniform gradient scheme and write bvals/bvecs");
  scheme->add_option("--n", n, "Number of directions")->required();
  scheme->add_option("--seed", seed, "Random start seed");
  scheme->add_option("--out", out_dir, "Output directory")->required();

  auto* phantom = app.add_subcommand("phantom", "Generate train/val/test phantom volumes and ground truth");
  auto* train_cmd = app.add_subcommand("train", "Train the network on a generated dataset");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and the LLS baseline on the test set");
  for (auto* sub : {phantom, train_cmd, eval}) {
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--out", out_dir, "Override the run directory");
  }
  train_cmd->add_flag("--resume", resume, "Not supported");
  eval->add_option("--dirs", dirs_text, "Comma-separated direction counts");
  eval->add_option("--subset-seed", subset_seed, "Seed for direction subsets (default: run seed)");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default: <run>/train/checkpoint.fdti)");

  auto* fit = app.add_subcommand("fit", "LLS tensor fit with parametric maps and renders");
  fit->add_option("--volume", volume, "Acquisition container")->required();
  fit->add_option("--bvals", bvals, "bvals file (default: next to the volume)");
  fit->add_option("--bvecs", bvecs, "bvecs file (default: next to the volume)");
  fit->add_option("--subset", subset, "Comma-separated direction indices (default: all)");
  fit->add_option("--truth", truth, "Ground-truth tensor container for error metrics");
  fit->add_option("--slice", slice, "Slice to render");
  fit->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (scheme->parsed()) return cmd_scheme(n, seed, out_dir, out);
    if (fit->parsed()) return cmd_fit(volume, bvals, bvecs, subset, truth, slice, out_dir, out);
    if (resume) {
      err << "error: resuming training is not supported; start a new run\n";
      return kExitUsage;
    }
    RunConfig cfg = load_run_config(config_path);
    if (app.get_subcommands().front()->count("--seed") > 0) {
      cfg.seed = seed;
      if (!cfg.net_seed_set) cfg.net.seed = seed;
    }
    const fs::path run_path = run_dir(cfg, out_dir);
    if (phantom->parsed()) return cmd_phantom(cfg, run_path, out, err);
    if (train_cmd->parsed()) return cmd_train(cfg, run_path, out, err);
    const std::uint64_t sseed = eval->count("--subset-seed") > 0 ? subset_seed : cfg.seed;
    return cmd_eval(run_path, checkpoint, parse_int_list(dirs_text, "--dirs"), sseed, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace flexdti::cli
