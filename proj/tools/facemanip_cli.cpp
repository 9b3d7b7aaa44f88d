// Command-line front end: fixture preparation, boundary rendering, the three
// training phases plus synthesis training, manipulation sweeps, and metric
// evaluation. One pipeline phase per process; checkpoints are written
// atomically. Exit codes: 0 ok, 2 config, 3 data, 4 dependency, 5 numerical.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "facemanip/facemanip.hpp"

namespace fs = std::filesystem;
using namespace facemanip;

using Real = float;

namespace {

int worker_count() {
  const char* env = std::getenv("BM_NUM_WORKERS");
  if (!env) return 1;
  int n = std::atoi(env);
  if (n < 1) return 1;
  return std::min<int>(n, static_cast<int>(std::thread::hardware_concurrency()));
}

// Order-preserving parallel index map; results land by index so output is
// independent of the worker count.
template <class Fn>
void parallel_for_ordered(std::size_t n, Fn&& fn) {
  int workers = worker_count();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futs;
  std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    futs.push_back(std::async(std::launch::async, [lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    }));
  }
  for (auto& f : futs) f.get();
}

struct CliOptions {
  RunConfig cfg;
  std::string config_file;
  std::string manifest;
  std::string out;
  std::string phase;
  std::string metric = "fid";
  std::string estimators_ckpt, stage1_ckpt, stage2_ckpt, proxy_ckpt;
  std::string image_path, landmarks_path;
  std::string grid = "18.75:3.75:11";
  std::string expr_grid;
  std::string m_sweep;
  std::string probe_source = "synth";
  bool force = false;
  // flag presence trackers
  bool has_seed = false, has_resolution = false, has_steps = false, has_batch = false,
       has_m = false, has_boundary_source = false, has_lr = false;
  std::uint64_t seed = 0;
  int resolution = 0, steps = 0, batch = 0;
  double m = 0, lr = 0;
  std::string boundary_source;
  int ids = 8, per_id = 20;
};

void finalize_config(CliOptions& o) {
  if (!o.config_file.empty()) o.cfg.apply_file(o.config_file);
  if (o.has_seed) o.cfg.seed = o.seed;
  if (o.has_resolution) o.cfg.resolution = o.resolution;
  if (o.has_steps) o.cfg.max_steps = o.steps;
  if (o.has_batch) o.cfg.batch_size = o.batch;
  if (o.has_m) o.cfg.weights.margin_m = o.m;
  if (o.has_lr) o.cfg.lr = o.lr;
  if (o.has_boundary_source) o.cfg.boundary_source = o.boundary_source;
  o.cfg.validate();
}

void split_examples(const std::vector<TrainingExample>& all,
                    std::vector<TrainingExample>& train, std::vector<TrainingExample>& val,
                    std::vector<TrainingExample>& test) {
  for (const auto& e : all) {
    if (e.split == Split::train) train.push_back(e);
    else if (e.split == Split::val) val.push_back(e);
    else test.push_back(e);
  }
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty())
    throw DependencyError("missing required artifact: " + what +
                          " (pass the corresponding flag)");
  if (!fs::exists(path)) throw DependencyError(what + " not found: " + path);
}

CheckpointMeta load_stage(const std::string& path, nn::ParamList<Real>& params,
                          Stage expected, std::uint64_t cfg_hash, bool force,
                          const std::string& what) {
  require_file(path, what);
  CheckpointMeta meta = load_checkpoint<Real>(path, params, cfg_hash, force);
  if (meta.stage != expected)
    throw DependencyError(what + ": wrong checkpoint stage in " + path);
  return meta;
}

void report_checkpoint(const std::string& path) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash_file(path)));
  std::cout << "checkpoint " << path << " hash " << buf << "\n";
}

// ---- subcommand bodies -------------------------------------------------------

int cmd_prepare(CliOptions& o) {
  finalize_config(o);
  if (o.out.empty()) throw ConfigError("prepare: --out is required");
  FixtureOptions fo;
  fo.out_dir = o.out;
  fo.n_identities = o.ids;
  fo.per_identity = o.per_id;
  fo.resolution = o.cfg.resolution;
  fo.seed = o.cfg.seed;
  std::string manifest = write_fixture_dataset(fo);
  std::cout << "wrote " << manifest << " (" << fo.n_identities << " identities x "
            << fo.per_identity << ")\n";
  return 0;
}

int cmd_render_boundary(CliOptions& o) {
  finalize_config(o);
  if (o.out.empty()) throw ConfigError("render-boundary: --out is required");
  Manifest manifest = load_manifest(o.manifest);
  fs::create_directories(o.out);
  int res = o.cfg.resolution;

  std::vector<std::string> outputs(manifest.records.size());
  std::vector<std::vector<unsigned char>> encoded(manifest.records.size());
  parallel_for_ordered(manifest.records.size(), [&](std::size_t i) {
    const auto& rec = manifest.records[i];
    LandmarkSet lms = landmarks_for_record(rec);
    BoundaryImage img = rasterize_boundary(lms, res, res);
    encoded[i] = pngio::encode_rgb8(res, res, boundary_to_rgb8(img));
    outputs[i] = fs::path(rec.image_path).stem().string() + "_boundary.png";
  });
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    std::string path = (fs::path(o.out) / outputs[i]).string();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(encoded[i].data()),
             static_cast<std::streamsize>(encoded[i].size()));
    if (!os) throw DataError("cannot write " + path);
    nlohmann::json entry;
    entry["source"] = manifest.records[i].image_path;
    entry["boundary"] = outputs[i];
    index.push_back(entry);
  }
  std::ofstream idx(fs::path(o.out) / "index.json");
  idx << index.dump(2) << "\n";
  std::cout << "rendered " << outputs.size() << " boundary images to " << o.out << "\n";
  return 0;
}

int cmd_train(CliOptions& o) {
  finalize_config(o);
  if (o.out.empty()) throw ConfigError("train: --out is required");
  Manifest manifest = load_manifest(o.manifest);
  auto all = materialize_manifest(manifest, o.cfg.resolution);
  std::vector<TrainingExample> train, val, test;
  split_examples(all, train, val, test);
  if (train.empty()) throw DataError("train: manifest has no train-split records");

  auto bundle = init_networks<Real>(o.cfg.model(), o.cfg.seed);
  std::uint64_t cfg_hash = o.cfg.config_hash();

  if (o.phase == "estimators") {
    EstimatorTrainOptions topt;
    topt.max_steps = o.cfg.max_steps;
    topt.batch_size = o.cfg.batch_size;
    topt.eval_interval = o.cfg.eval_interval;
    topt.plateau_patience = o.cfg.plateau_patience;
    topt.log_interval = o.cfg.log_interval;
    topt.lr = o.cfg.lr;
    topt.out_dir = o.out;
    topt.seed = o.cfg.seed;
    topt.config_hash = cfg_hash;
    auto res = pretrain_estimators(bundle, train, val, topt);
    std::cout << "estimators: steps=" << res.steps_run
              << " val_mse=" << res.final_val_mse << " pose_mae=["
              << res.val_pose_mae[0] << "," << res.val_pose_mae[1] << ","
              << res.val_pose_mae[2] << "] expr_mae=" << res.val_expr_mae << "\n";
    report_checkpoint(res.checkpoint_path);
    return 0;
  }
  if (o.phase == "boundary") {
    auto est_params = bundle.params_estimators();
    load_stage(o.estimators_ckpt, est_params, Stage::estimators, cfg_hash, o.force,
               "estimator checkpoint");
    Stage1TrainOptions topt;
    topt.max_steps = o.cfg.max_steps;
    topt.batch_size = o.cfg.batch_size;
    topt.checkpoint_interval = o.cfg.checkpoint_interval;
    topt.log_interval = o.cfg.log_interval;
    topt.lr = o.cfg.lr;
    topt.weights = o.cfg.weights;
    topt.out_dir = o.out;
    topt.seed = o.cfg.seed;
    topt.config_hash = cfg_hash;
    auto res = train_boundary_stage(bundle, train, topt);
    std::cout << "stage1: steps=" << res.steps_run << " pix=" << res.final_pix
              << " reg=" << res.final_reg << " total=" << res.final_total << "\n";
    report_checkpoint(res.checkpoint_path);
    return 0;
  }
  if (o.phase == "proxy") {
    ProxyTrainOptions topt;
    topt.max_steps = o.cfg.max_steps;
    topt.batch_size = o.cfg.batch_size;
    topt.eval_interval = o.cfg.eval_interval;
    topt.log_interval = o.cfg.log_interval;
    topt.lr = o.cfg.lr;
    topt.out_dir = o.out;
    topt.seed = o.cfg.seed;
    topt.config_hash = cfg_hash;
    auto res = train_proxy_stub(bundle, train, val, topt);
    std::cout << "proxy: steps=" << res.steps_run << " val_acc=" << res.val_accuracy
              << "\n";
    report_checkpoint(res.checkpoint_path);
    return 0;
  }
  if (o.phase == "synth") {
    auto s1_params = bundle.params_enc_dec();
    load_stage(o.stage1_ckpt, s1_params, Stage::boundary, cfg_hash, o.force,
               "stage-1 checkpoint");
    auto proxy_params = bundle.params_proxy();
    load_stage(o.proxy_ckpt, proxy_params, Stage::proxy, cfg_hash, o.force,
               "proxy checkpoint");
    if (!o.cfg.share_proxy_dip) {
      // D_ip defaults to the trained proxy weights.
      nn::ParamList<Real> dip_as_proxy;
      bundle.d_ip.collect("proxy", dip_as_proxy);
      load_checkpoint<Real>(o.proxy_ckpt, dip_as_proxy, cfg_hash, o.force);
    }
    Stage2TrainOptions topt;
    topt.max_steps = o.cfg.max_steps;
    topt.batch_size = o.cfg.batch_size;
    topt.checkpoint_interval = o.cfg.checkpoint_interval;
    topt.log_interval = o.cfg.log_interval;
    topt.lr = o.cfg.lr;
    topt.weights = o.cfg.weights;
    topt.use_predicted_boundary = o.cfg.boundary_source == "predicted";
    topt.out_dir = o.out;
    topt.seed = o.cfg.seed;
    topt.config_hash = cfg_hash;
    auto res = train_synthesis_stage(bundle, train, val, topt);
    std::cout << "stage2: steps=" << res.steps_run << " pix_mul=" << res.final_pixmul
              << " d_loss=" << res.final_d_loss << " g_total=" << res.final_g_total
              << "\n";
    report_checkpoint(res.checkpoint_path);
    return 0;
  }
  throw ConfigError("train: unknown phase '" + o.phase +
                    "' (expected estimators|boundary|proxy|synth)");
}

struct GridSpec {
  double start = 0, step = 0;
  int count = 1;
};

GridSpec parse_grid(const std::string& s) {
  GridSpec g;
  if (std::sscanf(s.c_str(), "%lf:%lf:%d", &g.start, &g.step, &g.count) != 3 ||
      g.count < 1)
    throw ConfigError("invalid grid spec '" + s + "' (want start:step:count)");
  return g;
}

int cmd_sweep(CliOptions& o) {
  finalize_config(o);
  if (o.out.empty()) throw ConfigError("sweep: --out is required");
  auto bundle = init_networks<Real>(o.cfg.model(), o.cfg.seed);
  std::uint64_t cfg_hash = o.cfg.config_hash();
  auto s1 = bundle.params_enc_dec();
  load_stage(o.stage1_ckpt, s1, Stage::boundary, cfg_hash, o.force, "stage-1 checkpoint");
  auto s2 = bundle.params_generator();
  for (auto& p : bundle.params_discriminators()) s2.push_back(p);
  load_stage(o.stage2_ckpt, s2, Stage::synthesis, cfg_hash, o.force,
             "stage-2 checkpoint");

  require_file(o.image_path, "input image");
  require_file(o.landmarks_path, "input landmarks");
  FaceImage face = decode_and_normalize(o.image_path, o.cfg.resolution);
  cv::Mat probe = cv::imread(o.image_path, cv::IMREAD_COLOR);
  CropRect crop{0, 0, static_cast<double>(probe.cols), static_cast<double>(probe.rows)};
  LandmarkSet lms =
      normalize_landmarks(read_landmark_file(o.landmarks_path), crop).landmarks;
  PoseVector own_pose = pose_from_landmarks(lms);

  GridSpec pose_grid = parse_grid(o.grid);
  std::vector<std::vector<FaceImage>> rows;
  std::vector<FaceImage> pose_row;
  for (int i = 0; i < pose_grid.count; ++i) {
    double yaw_deg = pose_grid.start + pose_grid.step * i;
    PoseVector p{{yaw_deg / 90.0, own_pose.v[1], own_pose.v[2]}};
    ExpressionVector e;  // neutral
    pose_row.push_back(manipulate(bundle, face, lms, p, e));
  }
  rows.push_back(std::move(pose_row));

  if (!o.expr_grid.empty()) {
    int au = 0;
    GridSpec eg;
    if (std::sscanf(o.expr_grid.c_str(), "%d:%lf:%lf:%d", &au, &eg.start, &eg.step,
                    &eg.count) != 4 ||
        au < 0 || au >= kNumActionUnits || eg.count < 1)
      throw ConfigError("invalid --expr-grid (want au:start:step:count)");
    std::vector<FaceImage> expr_row;
    for (int i = 0; i < eg.count; ++i) {
      ExpressionVector e;
      e.v[au] = std::clamp(eg.start + eg.step * i, 0.0, 1.0);
      expr_row.push_back(manipulate(bundle, face, lms, own_pose, e));
    }
    rows.push_back(std::move(expr_row));
  }

  int res = o.cfg.resolution;
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  int grid_h = res * static_cast<int>(rows.size());
  int grid_w = res * static_cast<int>(cols);
  std::vector<unsigned char> rgb(static_cast<std::size_t>(grid_h) * grid_w * 3, 0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      auto tile = face_to_rgb8(rows[r][c]);
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
          for (int ch = 0; ch < 3; ++ch)
            rgb[((r * res + y) * grid_w + c * res + x) * 3 + ch] =
                tile[(static_cast<std::size_t>(y) * res + x) * 3 + ch];
    }
  write_png_rgb8(o.out, grid_h, grid_w, rgb);
  std::cout << "wrote " << o.out << " (" << rows.size() << " x " << cols << " tiles)\n";
  return 0;
}

struct EvalInputs {
  std::vector<TrainingExample> test;
  NetworkBundle<Real> bundle;
  bool has_synth = false;
};

EvalInputs load_eval_inputs(CliOptions& o, bool need_synth) {
  EvalInputs in{.test = {}, .bundle = init_networks<Real>(o.cfg.model(), o.cfg.seed)};
  std::uint64_t cfg_hash = o.cfg.config_hash();
  auto proxy_params = in.bundle.params_proxy();
  load_stage(o.proxy_ckpt, proxy_params, Stage::proxy, cfg_hash, o.force,
             "proxy checkpoint");
  if (need_synth) {
    auto s1 = in.bundle.params_enc_dec();
    load_stage(o.stage1_ckpt, s1, Stage::boundary, cfg_hash, o.force,
               "stage-1 checkpoint");
    auto s2 = in.bundle.params_generator();
    for (auto& p : in.bundle.params_discriminators()) s2.push_back(p);
    load_stage(o.stage2_ckpt, s2, Stage::synthesis, cfg_hash, o.force,
               "stage-2 checkpoint");
    in.has_synth = true;
  }
  Manifest manifest = load_manifest(o.manifest);
  auto all = materialize_manifest(manifest, o.cfg.resolution);
  std::vector<TrainingExample> train, val;
  split_examples(all, train, val, in.test);
  if (in.test.empty()) throw DataError("eval: manifest has no test-split records");
  return in;
}

// FID protocol: real set = ground-truth targets of same-identity test pairs,
// synthesized set = manipulate(source -> target conditions) over those pairs.
// Unlike training, evaluation pairs are not illumination-matched.
nlohmann::json eval_fid(CliOptions& o, NetworkBundle<Real>& bundle,
                        const std::vector<TrainingExample>& test, bool synth) {
  std::vector<FaceImage> real, fake;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < test.size(); ++i)
    groups[test[i].identity].push_back(i);
  for (const auto& [key, idx] : groups) {
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b) {
        if (a == b) continue;
        const auto& src = test[idx[a]];
        const auto& tgt = test[idx[b]];
        real.push_back(tgt.face);
        if (synth) {
          BoundaryImage b_hat =
              predict_boundary(bundle, src.boundary, tgt.pose, tgt.expr);
          fake.push_back(synthesize_face(bundle, src.face, b_hat));
        } else {
          fake.push_back(tgt.face);
        }
      }
  }
  if (real.size() < 2) throw DataError("eval fid: need at least 2 test pairs");
  FeatureSet fa = embed_images(bundle, real);
  fa.source = "real";
  FeatureSet fb = embed_images(bundle, fake);
  fb.source = synth ? "synthesized" : "real";
  double value = evalsuite::fid(fa, fb);
  nlohmann::json j;
  j["metric"] = "fid";
  j["value"] = value;
  j["buckets"] = nlohmann::json::object();
  j["n_gallery"] = fa.size();
  j["n_probe"] = fb.size();
  j["config_hash"] = o.cfg.config_hash();
  return j;
}

// Rank-1 protocol: gallery = first test face per identity (real); probes =
// remaining test faces, frontalized through the pipeline when synth is on.
nlohmann::json eval_rank1(CliOptions& o, NetworkBundle<Real>& bundle,
                          const std::vector<TrainingExample>& test, bool synth) {
  std::map<std::string, std::size_t> first_of;
  for (std::size_t i = 0; i < test.size(); ++i)
    first_of.emplace(test[i].identity, i);

  std::vector<FaceImage> gallery_imgs, probe_imgs;
  std::vector<std::string> gallery_ids, probe_ids, probe_buckets;
  for (const auto& [id, idx] : first_of) {
    gallery_imgs.push_back(test[idx].face);
    gallery_ids.push_back(id);
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (first_of.at(test[i].identity) == i) continue;
    if (synth) {
      PoseVector frontal{{0.0, 0.0, 0.0}};
      BoundaryImage b_hat =
          predict_boundary(bundle, test[i].boundary, frontal, test[i].expr);
      probe_imgs.push_back(synthesize_face(bundle, test[i].face, b_hat));
    } else {
      probe_imgs.push_back(test[i].face);
    }
    probe_ids.push_back(test[i].identity);
    probe_buckets.push_back(pose_bucket_label(test[i].yaw_deg));
  }
  if (probe_imgs.empty()) throw DataError("eval rank1: no probe records");

  FeatureSet gal = embed_images(bundle, gallery_imgs);
  gal.identities = gallery_ids;
  gal.source = "real";
  FeatureSet probes = embed_images(bundle, probe_imgs);
  probes.identities = probe_ids;
  probes.pose_buckets = probe_buckets;
  probes.source = synth ? "synthesized" : "real";
  auto rep = evalsuite::rank1_accuracy(gal, probes);

  nlohmann::json j;
  j["metric"] = "rank1";
  j["value"] = rep.overall;
  j["buckets"] = rep.buckets;
  j["n_gallery"] = rep.n_gallery;
  j["n_probe"] = rep.n_probe;
  j["config_hash"] = o.cfg.config_hash();
  return j;
}

int cmd_eval(CliOptions& o) {
  finalize_config(o);
  if (o.out.empty()) throw ConfigError("eval: --out is required");
  bool synth = o.probe_source == "synth";
  if (o.probe_source != "synth" && o.probe_source != "real")
    throw ConfigError("eval: --probe-source must be synth|real");

  nlohmann::json out;
  if (!o.m_sweep.empty()) {
    // Parameter study: retrain the synthesis stage per margin value, then
    // evaluate both metrics.
    std::vector<double> ms;
    std::istringstream ss(o.m_sweep);
    std::string part;
    while (std::getline(ss, part, ',')) ms.push_back(std::stod(part));
    if (ms.empty()) throw ConfigError("eval: empty --m-sweep list");

    Manifest manifest = load_manifest(o.manifest);
    auto all = materialize_manifest(manifest, o.cfg.resolution);
    std::vector<TrainingExample> train, val, test;
    split_examples(all, train, val, test);
    if (train.empty() || test.empty())
      throw DataError("eval m-sweep: manifest needs train and test records");

    out["metric"] = "m_sweep";
    out["config_hash"] = o.cfg.config_hash();
    nlohmann::json values = nlohmann::json::object();
    for (double m : ms) {
      CliOptions run = o;
      run.cfg.weights.margin_m = m;
      auto bundle = init_networks<Real>(run.cfg.model(), run.cfg.seed);
      std::uint64_t cfg_hash = run.cfg.config_hash();
      auto s1 = bundle.params_enc_dec();
      load_stage(run.stage1_ckpt, s1, Stage::boundary, cfg_hash, run.force,
                 "stage-1 checkpoint");
      auto proxy_params = bundle.params_proxy();
      load_stage(run.proxy_ckpt, proxy_params, Stage::proxy, cfg_hash, run.force,
                 "proxy checkpoint");
      nn::ParamList<Real> dip_as_proxy;
      bundle.d_ip.collect("proxy", dip_as_proxy);
      load_checkpoint<Real>(run.proxy_ckpt, dip_as_proxy, cfg_hash, run.force);

      Stage2TrainOptions topt;
      topt.max_steps = run.cfg.max_steps;
      topt.batch_size = run.cfg.batch_size;
      topt.checkpoint_interval = run.cfg.checkpoint_interval;
      topt.log_interval = 0;
      topt.lr = run.cfg.lr;
      topt.weights = run.cfg.weights;
      topt.use_predicted_boundary = run.cfg.boundary_source == "predicted";
      topt.seed = run.cfg.seed;
      auto tr = train_synthesis_stage(bundle, train, val, topt);

      char key[32];
      std::snprintf(key, sizeof(key), "%g", m);
      nlohmann::json entry;
      entry["fid"] = eval_fid(run, bundle, test, true);
      entry["rank1"] = eval_rank1(run, bundle, test, true);
      entry["final_pix_mul"] = tr.final_pixmul;
      values[key] = entry;
      std::cout << "m=" << m << " fid=" << entry["fid"]["value"]
                << " rank1=" << entry["rank1"]["value"] << "\n";
    }
    out["values"] = values;
  } else {
    EvalInputs in = load_eval_inputs(o, synth);
    if (o.metric == "fid") out = eval_fid(o, in.bundle, in.test, synth);
    else if (o.metric == "rank1") out = eval_rank1(o, in.bundle, in.test, synth);
    else throw ConfigError("eval: --metric must be fid|rank1");
    std::cout << o.metric << " = " << out["value"] << "\n";
  }

  fs::path outp(o.out);
  if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
  std::ofstream os(o.out);
  os << out.dump(2) << "\n";
  if (!os) throw DataError("cannot write report: " + o.out);
  std::cout << "report written to " << o.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage boundary-conditioned face manipulation toolkit"};
  app.require_subcommand(1);
  CliOptions o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_file, "key=value config file");
    sub->add_option("--seed", o.seed)->each([&](const std::string&) { o.has_seed = true; });
    sub->add_option("--resolution", o.resolution)->each([&](const std::string&) {
      o.has_resolution = true;
    });
    sub->add_option("--steps", o.steps)->each([&](const std::string&) {
      o.has_steps = true;
    });
    sub->add_option("--batch", o.batch)->each([&](const std::string&) {
      o.has_batch = true;
    });
    sub->add_option("--m", o.m)->each([&](const std::string&) { o.has_m = true; });
    sub->add_option("--lr", o.lr)->each([&](const std::string&) { o.has_lr = true; });
    sub->add_option("--boundary-source", o.boundary_source, "predicted|ground_truth")
        ->each([&](const std::string&) { o.has_boundary_source = true; });
    sub->add_option("--out", o.out, "output path");
    sub->add_flag("--force", o.force, "ignore checkpoint config-hash mismatches");
  };

  auto* prepare = app.add_subcommand("prepare", "generate the synthetic fixture dataset");
  add_common(prepare);
  prepare->add_option("--ids", o.ids, "number of identities");
  prepare->add_option("--per-id", o.per_id, "records per identity");

  auto* render = app.add_subcommand("render-boundary", "rasterize boundary PNGs");
  add_common(render);
  render->add_option("--manifest", o.manifest)->required();

  auto* train = app.add_subcommand("train", "run one training phase");
  add_common(train);
  train->add_option("--phase", o.phase, "estimators|boundary|proxy|synth")->required();
  train->add_option("--manifest", o.manifest)->required();
  train->add_option("--estimators", o.estimators_ckpt, "estimator checkpoint");
  train->add_option("--stage1", o.stage1_ckpt, "stage-1 checkpoint");
  train->add_option("--proxy", o.proxy_ckpt, "proxy checkpoint");

  auto* sweep = app.add_subcommand("sweep", "tile manipulations over condition grids");
  add_common(sweep);
  sweep->add_option("--stage1", o.stage1_ckpt)->required();
  sweep->add_option("--stage2", o.stage2_ckpt)->required();
  sweep->add_option("--image", o.image_path)->required();
  sweep->add_option("--landmarks", o.landmarks_path)->required();
  sweep->add_option("--grid", o.grid, "yaw degrees start:step:count");
  sweep->add_option("--expr-grid", o.expr_grid, "au:start:step:count");

  auto* eval = app.add_subcommand("eval", "compute metrics and emit a JSON report");
  add_common(eval);
  eval->add_option("--metric", o.metric, "fid|rank1");
  eval->add_option("--manifest", o.manifest)->required();
  eval->add_option("--proxy", o.proxy_ckpt);
  eval->add_option("--stage1", o.stage1_ckpt);
  eval->add_option("--stage2", o.stage2_ckpt);
  eval->add_option("--probe-source", o.probe_source, "synth|real");
  eval->add_option("--m-sweep", o.m_sweep, "comma list of margins to retrain/evaluate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(o);
    if (render->parsed()) return cmd_render_boundary(o);
    if (train->parsed()) return cmd_train(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (eval->parsed()) return cmd_eval(o);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
