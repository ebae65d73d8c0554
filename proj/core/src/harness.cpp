#include "cbfmeta/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <tuple>

#include "CLI11.hpp"
#include "cbfmeta/error.hpp"
#include "cbfmeta/format.hpp"
#include "cbfmeta/parallel.hpp"
#include "json.hpp"

namespace cbfmeta {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::ArtifactWriteFailure, "cannot write " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::FormatMismatch, "not a number: '" + s + "'");
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

SurfaceDataset rows_of_groups(const SurfaceDataset& ds, const std::vector<AnchorGroup>& groups, std::size_t first,
                              std::size_t last) {
  SurfaceDataset out;
  for (std::size_t g = first; g < last && g < groups.size(); ++g) {
    for (std::size_t i = groups[g].begin; i < groups[g].end; ++i) out.samples.push_back(ds.samples[i]);
  }
  return out;
}

double gp_nll(const GpModel& gp, std::span<const SurfaceSample> test) {
  double s = 0.0;
  for (const auto& t : test) {
    const GpPrediction p = gp.predict(t.z);
    const double v = p.variance + gp.hyper().noise_var;
    const double r = t.label - p.mean;
    s += 0.5 * (std::log(2.0 * std::numbers::pi * v) + r * r / v);
  }
  return s / static_cast<double>(test.size());
}

}  // namespace

std::vector<SurfaceDataset> sample_eval_tasks(const PipelineConfig& cfg, int n_tasks) {
  const int max_count = *std::max_element(cfg.nll.counts.begin(), cfg.nll.counts.end());
  const TaskSampler sampler = obstacle_task_sampler(cfg.task);
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x6576616c7461736bULL));
  std::vector<SurfaceDataset> tasks;
  int attempts = 0;
  while (static_cast<int>(tasks.size()) < n_tasks) {
    if (++attempts > 100 * n_tasks) throw Error(ErrorCode::EmptyTask, "cannot sample tasks with enough anchors");
    const SurfaceDataset raw = sampler(rng);
    auto groups = anchor_groups(raw);
    if (static_cast<int>(groups.size()) <= max_count) continue;
    std::shuffle(groups.begin(), groups.end(), rng);
    SurfaceDataset ordered = rows_of_groups(raw, groups, 0, groups.size());
    tasks.push_back(std::move(ordered));
  }
  return tasks;
}

std::vector<NllRecord> evaluate_nll(const PipelineConfig& cfg, const ModelBundle* bundle,
                                    std::span<const Backend> backends) {
  const auto tasks = sample_eval_tasks(cfg, cfg.nll.n_tasks);
  const auto max_count = static_cast<std::size_t>(*std::max_element(cfg.nll.counts.begin(), cfg.nll.counts.end()));
  std::vector<std::vector<NllRecord>> slots(tasks.size());
  parallel_for(tasks.size(), thread_count(), [&](std::size_t ti) {
    using Clock = std::chrono::steady_clock;
    const SurfaceDataset& task = tasks[ti];
    const auto groups = anchor_groups(task);
    SurfaceDataset test = rows_of_groups(task, groups, max_count, groups.size());
    if (test.samples.size() > cfg.nll.max_test_points) test.samples.resize(cfg.nll.max_test_points);
    for (int n : cfg.nll.counts) {
      const SurfaceDataset adapt = rows_of_groups(task, groups, 0, static_cast<std::size_t>(n));
      for (Backend b : backends) {
        NllRecord rec{static_cast<int>(ti), n, b, 0.0, 0.0};
        if (b == Backend::Meta) {
          const auto t0 = Clock::now();
          const Posterior post = posterior_update(bundle->prior, adapt.samples, bundle->net);
          const double beta = confidence_radius(post, bundle->prior, cfg.simulate.episode.delta);
          rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
          (void)beta;
          rec.nll = negative_log_likelihood(post, test.samples, bundle->net);
        } else {
          const auto t0 = Clock::now();
          const GpModel gp = gp_fit(adapt, cfg.gp);
          rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
          rec.nll = gp_nll(gp, test.samples);
        }
        slots[ti].push_back(rec);
      }
    }
  });
  std::vector<NllRecord> out;
  for (auto& s : slots) out.insert(out.end(), s.begin(), s.end());
  return out;
}

namespace {

// Groups records by (n_points, backend) in first-seen order of counts then backends.
std::vector<std::pair<std::pair<int, Backend>, std::vector<const NllRecord*>>> group_records(
    std::span<const NllRecord> records) {
  std::vector<std::pair<std::pair<int, Backend>, std::vector<const NllRecord*>>> groups;
  for (const auto& r : records) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first.first == r.n_points && g.first.second == r.backend; });
    if (it == groups.end()) {
      groups.push_back({{r.n_points, r.backend}, {}});
      it = std::prev(groups.end());
    }
    it->second.push_back(&r);
  }
  std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.first.first < b.first.first; });
  return groups;
}

}  // namespace

std::string nll_curve_csv(std::span<const NllRecord> records) {
  std::ostringstream os;
  os << "n_points,backend,mean_nll,band_lo,band_hi,n_tasks\n";
  for (const auto& [key, recs] : group_records(records)) {
    std::vector<double> v;
    for (const auto* r : recs) v.push_back(r->nll);
    const double m = mean_of(v);
    const double s = std_of(v);
    os << key.first << ',' << to_string(key.second) << ',' << fmt_double(m) << ',' << fmt_double(m - 3.0 * s) << ','
       << fmt_double(m + 3.0 * s) << ',' << v.size() << '\n';
  }
  return os.str();
}

std::string nll_raw_csv(std::span<const NllRecord> records) {
  std::ostringstream os;
  os << "task,n_points,backend,nll\n";
  for (const auto& r : records) os << r.task << ',' << r.n_points << ',' << to_string(r.backend) << ',' << fmt_double(r.nll) << '\n';
  return os.str();
}

std::string timing_csv(std::span<const NllRecord> records) {
  std::ostringstream os;
  os << "n_points,backend,mean_seconds,std_seconds,repeats\n";
  for (const auto& [key, recs] : group_records(records)) {
    std::vector<double> v;
    for (const auto* r : recs) v.push_back(r->seconds);
    os << key.first << ',' << to_string(key.second) << ',' << fmt_double(mean_of(v)) << ',' << fmt_double(std_of(v)) << ','
       << v.size() << '\n';
  }
  return os.str();
}

std::vector<NllRecord> parse_nll_raw_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "task,n_points,backend,nll") {
    throw Error(ErrorCode::FormatMismatch, "nll_raw.csv has an unexpected header");
  }
  std::vector<NllRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 4) throw Error(ErrorCode::FormatMismatch, "nll_raw.csv row has " + std::to_string(c.size()) + " cells");
    NllRecord r;
    r.task = static_cast<int>(parse_double(c[0]));
    r.n_points = static_cast<int>(parse_double(c[1]));
    r.backend = backend_from_string(c[2]);
    r.nll = parse_double(c[3]);
    out.push_back(r);
  }
  return out;
}

std::vector<EpisodeCsvRow> parse_episode_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,qx,qy,theta,v,omega,eps,status", 0) != 0) {
    throw Error(ErrorCode::FormatMismatch, "episode CSV has an unexpected header");
  }
  std::vector<EpisodeCsvRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() < 8) throw Error(ErrorCode::FormatMismatch, "short episode CSV row");
    rows.push_back({parse_double(c[0]), parse_double(c[1]), parse_double(c[2])});
  }
  return rows;
}

namespace {

struct Options {
  std::string subcommand;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string backend;
  std::string checkpoint;
  bool desk_scale = false;
};

PipelineConfig resolve_config(const Options& opt) {
  PipelineConfig cfg = opt.config_path.empty() ? PipelineConfig{} : config_from_json(read_text_file(opt.config_path));
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.desk_scale) cfg.apply_desk_scale();
  cfg.meta.seed = cfg.seed;
  if (!opt.backend.empty()) {
    try {
      cfg.simulate.backends = {backend_from_string(opt.backend)};
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigInvalid, e.what());
    }
  }
  cfg.validate();
  return cfg;
}

fs::path checkpoint_path(const Options& opt) {
  return opt.checkpoint.empty() ? fs::path(opt.out_dir) / "model.fnet" : fs::path(opt.checkpoint);
}

ModelBundle load_checkpoint(const Options& opt) {
  const fs::path p = checkpoint_path(opt);
  if (!fs::exists(p)) throw Error(ErrorCode::ConfigInvalid, "checkpoint not found: " + p.string());
  return load_bundle_file(p);
}

void cmd_meta_train(const Options& opt, const PipelineConfig& cfg, std::ostream& out) {
  const fs::path dir(opt.out_dir);
  const MetaResult res = meta_train(cfg.meta, obstacle_task_sampler(cfg.task));
  save_bundle_file(dir / "model.fnet", res.params.bundle());
  write_text_file(dir / "train_log.csv", meta_log_to_csv(res.log));
  write_text_file(dir / "config.resolved.json", config_to_json(cfg));
  out << "meta-train: " << res.log.size() << " log rows, checkpoint " << (dir / "model.fnet").string() << "\n";
}

void cmd_eval_nll(const Options& opt, const PipelineConfig& cfg, std::ostream& out) {
  const fs::path dir(opt.out_dir);
  std::vector<Backend> backends{Backend::Meta, Backend::Gp};
  if (!opt.backend.empty()) backends = {backend_from_string(opt.backend)};
  std::optional<ModelBundle> bundle;
  if (std::find(backends.begin(), backends.end(), Backend::Meta) != backends.end()) bundle = load_checkpoint(opt);
  const auto records = evaluate_nll(cfg, bundle ? &*bundle : nullptr, backends);
  write_text_file(dir / "nll_raw.csv", nll_raw_csv(records));
  write_text_file(dir / "nll_curve.csv", nll_curve_csv(records));
  write_text_file(dir / "timing.csv", timing_csv(records));
  out << "eval-nll: " << records.size() << " records\n";
}

std::string episode_stem(const std::string& scene, double period, Backend b) {
  return scene + "__dl" + fmt_double(period) + "__" + to_string(b);
}

void cmd_simulate(const Options& opt, const PipelineConfig& cfg, std::ostream& out) {
  const fs::path dir(opt.out_dir);
  const auto& sim = cfg.simulate;
  std::optional<ModelBundle> bundle;
  if (std::find(sim.backends.begin(), sim.backends.end(), Backend::Meta) != sim.backends.end()) bundle = load_checkpoint(opt);
  struct Job {
    std::size_t scene;
    std::size_t period;
    Backend backend;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < sim.scenes.size(); ++s) {
    for (std::size_t p = 0; p < sim.lidar_periods.size(); ++p) {
      for (Backend b : sim.backends) jobs.push_back({s, p, b});
    }
  }
  std::vector<EpisodeResult> results(jobs.size());
  parallel_for(jobs.size(), thread_count(), [&](std::size_t i) {
    const Job& job = jobs[i];
    EpisodeConfig ep = sim.episode;
    ep.lidar_period = sim.lidar_periods[job.period];
    ep.backend = job.backend;
    ep.buffer = cfg.buffer;
    ep.offsets = cfg.task.offsets;
    ep.gp = cfg.gp;
    ep.seed = splitmix64(cfg.seed ^ splitmix64(job.scene * 1000003ULL + job.period));
    results[i] = run_episode(sim.scenes[job.scene].env, bundle ? &*bundle : nullptr, ep, cfg.task.lidar);
  });
  std::ostringstream grid;
  grid << "environment,lidar_period,backend,x,y,obstacle_id,hb,mean,true_sd\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Job& job = jobs[i];
    const auto& scene = sim.scenes[job.scene];
    const double period = sim.lidar_periods[job.period];
    const std::string stem = episode_stem(scene.name, period, job.backend);
    const EpisodeLog& log = results[i].log;
    write_text_file(dir / "episodes" / (stem + ".csv"), episode_to_csv(log));
    ordered_json summary = ordered_json::parse(episode_summary_json(log));
    summary["environment"] = scene.name;
    summary["lidar_period"] = period;
    summary["backend"] = to_string(job.backend);
    summary["goal"] = {sim.episode.goal.x(), sim.episode.goal.y()};
    summary["cse_stride"] = log.cse_stride;
    summary["log"] = stem + ".csv";
    write_text_file(dir / "episodes" / (stem + ".json"), summary.dump(2) + "\n");
    const std::string body = hb_grid_to_csv(scene.env, results[i].barriers, sim.grid);
    std::istringstream rows(body);
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) grid << scene.name << ',' << fmt_double(period) << ',' << to_string(job.backend) << ',' << line << '\n';
    out << stem << ": cse " << fmt_double(log.cse) << ", final distance " << fmt_double(log.final_distance)
        << ", violations " << log.violation_steps << ", infeasible " << log.infeasible_steps << "\n";
  }
  write_text_file(dir / "grid_hb.csv", grid.str());
}

void cmd_report(const Options& opt, std::ostream& out) {
  const fs::path dir(opt.out_dir);
  const fs::path episodes = dir / "episodes";
  std::vector<fs::path> summaries;
  if (fs::is_directory(episodes)) {
    for (const auto& e : fs::directory_iterator(episodes)) {
      if (e.path().extension() == ".json") summaries.push_back(e.path());
    }
  }
  std::sort(summaries.begin(), summaries.end());
  const bool has_nll = fs::exists(dir / "nll_raw.csv");
  if (summaries.empty() && !has_nll) {
    throw Error(ErrorCode::ConfigInvalid, "nothing to report in " + dir.string());
  }
  if (!summaries.empty()) {
    struct Row {
      std::string env;
      double period;
      std::string backend;
      std::string line;
    };
    std::vector<Row> rows;
    for (const auto& path : summaries) {
      ordered_json s;
      try {
        s = ordered_json::parse(read_text_file(path));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatMismatch, path.string() + ": " + e.what());
      }
      try {
        const auto log_rows = parse_episode_csv(read_text_file(episodes / s.at("log").get<std::string>()));
        const Vec2 goal(s.at("goal").at(0).get<double>(), s.at("goal").at(1).get<double>());
        const auto stride = static_cast<std::size_t>(std::max(1, s.at("cse_stride").get<int>()));
        double cse = 0.0;
        const std::size_t n = log_rows.empty() ? 0 : log_rows.size() - 1;
        for (std::size_t r = 0; r < n; r += stride) cse += (Vec2(log_rows[r].qx, log_rows[r].qy) - goal).squaredNorm();
        const double final_dist = log_rows.empty() ? 0.0 : (Vec2(log_rows.back().qx, log_rows.back().qy) - goal).norm();
        Row row{s.at("environment").get<std::string>(), s.at("lidar_period").get<double>(), s.at("backend").get<std::string>(), ""};
        std::ostringstream line;
        line << row.env << ',' << fmt_double(row.period) << ',' << row.backend << ',' << fmt_double(cse) << ','
             << fmt_double(final_dist) << ',' << s.at("violation_steps").get<int>() << ','
             << s.at("infeasible_steps").get<int>() << ',' << s.at("invariant_failures").get<int>() << ','
             << (s.at("aborted").get<bool>() ? 1 : 0);
        row.line = line.str();
        rows.push_back(row);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatMismatch, path.string() + ": " + e.what());
      }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return std::tie(a.env, a.period, a.backend) < std::tie(b.env, b.period, b.backend);
    });
    std::ostringstream table;
    table << "environment,lidar_period,backend,cse,final_distance,violations,infeasible_steps,invariant_failures,aborted\n";
    for (const auto& r : rows) table << r.line << '\n';
    write_text_file(dir / "cse_table.csv", table.str());
    out << "report: " << rows.size() << " episodes in cse_table.csv\n";
  }
  if (has_nll) {
    const auto records = parse_nll_raw_csv(read_text_file(dir / "nll_raw.csv"));
    write_text_file(dir / "nll_curve.csv", nll_curve_csv(records));
    out << "report: " << records.size() << " nll records folded into nll_curve.csv\n";
  }
}

std::string error_json(const std::string& code, const std::string& message, const std::string& subcommand) {
  ordered_json j;
  j["error"] = {{"code", code}, {"message", message}, {"subcommand", subcommand}};
  return j.dump() + "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"cbfmeta: meta-learned barrier functions from LiDAR scans"};
  app.require_subcommand(1);
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON configuration file");
    sub->add_option("--seed", opt.seed, "master seed");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--backend", opt.backend, "meta or gp");
    sub->add_option("--checkpoint", opt.checkpoint, "model bundle (default OUT/model.fnet)");
    sub->add_flag("--desk-scale", opt.desk_scale, "reduced iteration and task budgets");
  };
  for (const char* name : {"meta-train", "eval-nll", "simulate", "report"}) {
    add_common(app.add_subcommand(name)->callback([&opt, name] { opt.subcommand = name; }));
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << error_json("ConfigInvalid", e.what(), opt.subcommand);
    return 2;
  }
  try {
    if (opt.subcommand == "report") {
      cmd_report(opt, out);
      return 0;
    }
    const PipelineConfig cfg = resolve_config(opt);
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec || !fs::is_directory(opt.out_dir)) {
      throw Error(ErrorCode::ArtifactWriteFailure, "cannot create output directory " + opt.out_dir);
    }
    if (opt.subcommand == "meta-train") cmd_meta_train(opt, cfg, out);
    if (opt.subcommand == "eval-nll") cmd_eval_nll(opt, cfg, out);
    if (opt.subcommand == "simulate") cmd_simulate(opt, cfg, out);
    return 0;
  } catch (const Error& e) {
    err << error_json(std::string(to_string(e.code())), e.what(), opt.subcommand);
    return e.code() == ErrorCode::ConfigInvalid ? 2 : 1;
  } catch (const std::exception& e) {
    err << error_json("Internal", e.what(), opt.subcommand);
    return 1;
  }
}

}  // namespace cbfmeta
