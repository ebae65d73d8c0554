#include "cbfmeta/config.hpp"

#include <set>

#include "cbfmeta/error.hpp"
#include "json.hpp"

namespace cbfmeta {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, "config: " + what); }

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_ + " must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      invalid(path_ + "." + key + " has the wrong type");
    }
  }

  void interval(const std::string& key, Interval& out) {
    std::vector<double> v{out.lo, out.hi};
    get(key, v);
    if (v.size() != 2) invalid(path_ + "." + key + " must be [lo, hi]");
    out = {v[0], v[1]};
  }

  const json* sub(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) invalid("unknown key " + path_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

ShapeFamily family_from_string(const std::string& s) {
  if (s == "ellipse") return ShapeFamily::Ellipse;
  if (s == "polygon") return ShapeFamily::Polygon;
  if (s == "mixed") return ShapeFamily::Mixed;
  invalid("unknown shape family '" + s + "'");
}

std::string family_to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Ellipse: return "ellipse";
    case ShapeFamily::Polygon: return "polygon";
    case ShapeFamily::Mixed: return "mixed";
  }
  return "ellipse";
}

void read_box(Section& s, const std::string& key, Box2& box) {
  std::vector<double> v{box.min.x(), box.min.y(), box.max.x(), box.max.y()};
  s.get(key, v);
  if (v.size() != 4) invalid(key + " must be [xmin, ymin, xmax, ymax]");
  box = {Vec2(v[0], v[1]), Vec2(v[2], v[3])};
}

ordered_json box_json(const Box2& b) { return {b.min.x(), b.min.y(), b.max.x(), b.max.y()}; }

void read_distribution(const json& j, DistributionParams& d) {
  Section s(j, "environment");
  s.interval("semi_axis", d.semi_axis);
  s.interval("center", d.center);
  s.interval("rotation", d.rotation);
  std::string fam = family_to_string(d.family);
  s.get("family", fam);
  d.family = family_from_string(fam);
  s.get("polygon_min_vertices", d.polygon_min_vertices);
  s.get("polygon_max_vertices", d.polygon_max_vertices);
  s.get("clearance", d.clearance);
  s.get("sampling_budget", d.sampling_budget);
  s.get("boundary_segments", d.boundary_segments);
  read_box(s, "world_bounds", d.world_bounds);
  s.finish();
}

void read_net(const json& j, NetSpec& n) {
  Section s(j, "meta.net");
  s.get("hidden", n.hidden);
  s.get("output_dim", n.output_dim);
  std::string act = to_string(n.activation);
  s.get("activation", act);
  try {
    n.activation = activation_from_string(act);
  } catch (const Error&) {
    invalid("unknown activation '" + act + "'");
  }
  s.finish();
}

Backend parse_backend(const std::string& b) {
  try {
    return backend_from_string(b);
  } catch (const Error&) {
    invalid("unknown backend '" + b + "'");
  }
}

NamedScene builtin_scene(const std::string& name) {
  for (auto& s : benchmark_scenes()) {
    if (s.name == name) return s;
  }
  invalid("unknown scene '" + name + "'");
}

}  // namespace

std::vector<NamedScene> benchmark_scenes() {
  auto e = [](double cx, double cy, double a, double b, double rot) {
    return Obstacle::ellipse(Ellipse{Vec2(a, b), Vec2(cx, cy), rot});
  };
  std::vector<NamedScene> scenes(3);
  scenes[0].name = "scene1";
  scenes[0].env.obstacles = {e(0.0, 0.15, 0.7, 0.5, 0.4)};
  scenes[1].name = "scene2";
  scenes[1].env.obstacles = {e(-0.7, 0.4, 0.5, 0.4, 1.0), e(0.7, -0.35, 0.55, 0.45, 2.0)};
  scenes[2].name = "scene3";
  scenes[2].env.obstacles = {e(-0.8, -0.25, 0.45, 0.4, 0.2), e(0.0, 0.5, 0.45, 0.4, 1.2),
                             e(0.8, -0.3, 0.4, 0.45, 0.0)};
  return scenes;
}

PipelineConfig::PipelineConfig() { simulate.scenes = benchmark_scenes(); }

void PipelineConfig::validate() const {
  task.distribution.validate();
  task.lidar.validate();
  task.offsets.validate();
  if (task.n_poses < 1 || !(task.ring_radius > 0.0)) invalid("task ring must have >= 1 pose and radius > 0");
  meta.validate();
  buffer.validate();
  gp.validate();
  if (nll.n_tasks < 1 || nll.counts.empty() || nll.max_test_points < 1) invalid("eval_nll needs tasks, counts and test points");
  for (int c : nll.counts) {
    if (c < 1) invalid("eval_nll counts must be >= 1");
  }
  if (simulate.scenes.empty() || simulate.lidar_periods.empty() || simulate.backends.empty()) {
    invalid("simulate needs scenes, lidar periods and backends");
  }
  for (double p : simulate.lidar_periods) {
    EpisodeConfig e = simulate.episode;
    e.lidar_period = p;
    e.validate();
  }
  if (simulate.grid.nx < 1 || simulate.grid.ny < 1) invalid("grid sizes must be >= 1");
  if (desk.n_iterations < 0 || desk.nll_tasks < 1) invalid("desk_scale budgets invalid");
}

void PipelineConfig::apply_desk_scale() {
  meta.n_iterations = desk.n_iterations;
  nll.n_tasks = desk.nll_tasks;
}

PipelineConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    invalid(std::string("not valid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  Section top(root, "config");
  top.get("seed", cfg.seed);
  if (const json* j = top.sub("environment")) read_distribution(*j, cfg.task.distribution);
  if (const json* j = top.sub("lidar")) {
    Section s(*j, "lidar");
    s.get("n_rays", cfg.task.lidar.n_rays);
    s.get("max_range", cfg.task.lidar.max_range);
    s.get("range_noise_std", cfg.task.lidar.range_noise_std);
    s.get("angular_offset", cfg.task.lidar.angular_offset);
    s.finish();
  }
  if (const json* j = top.sub("offsets")) {
    Section s(*j, "offsets");
    s.get("delta", cfg.task.offsets.delta);
    s.get("n_minus", cfg.task.offsets.n_minus);
    s.get("n_plus", cfg.task.offsets.n_plus);
    s.finish();
  }
  if (const json* j = top.sub("meta")) {
    Section s(*j, "meta");
    auto& m = cfg.meta;
    s.get("n_iterations", m.n_iterations);
    s.get("tasks_per_iteration", m.tasks_per_iteration);
    s.get("learning_rate", m.learning_rate);
    s.get("adam_beta1", m.adam_beta1);
    s.get("adam_beta2", m.adam_beta2);
    s.get("adam_eps", m.adam_eps);
    s.get("gamma", m.gamma);
    s.get("sigma", m.sigma);
    s.get("lambda0_eps", m.lambda0_eps);
    s.get("init_precision", m.init_precision);
    s.get("max_task_points", m.max_task_points);
    s.get("train_features", m.train_features);
    s.get("probe_tasks", m.probe_tasks);
    s.get("probe_every", m.probe_every);
    s.get("probe_delta", m.probe_delta);
    s.get("ring_radius", cfg.task.ring_radius);
    s.get("n_poses", cfg.task.n_poses);
    if (const json* n = s.sub("net")) read_net(*n, m.net);
    s.finish();
  }
  if (const json* j = top.sub("buffer")) {
    Section s(*j, "buffer");
    s.get("eta", cfg.buffer.eta);
    s.get("capacity", cfg.buffer.capacity);
    s.finish();
  }
  if (const json* j = top.sub("gp")) {
    Section s(*j, "gp");
    s.interval("signal_var", cfg.gp.signal_var);
    s.interval("length_scale", cfg.gp.length_scale);
    s.interval("noise_var", cfg.gp.noise_var);
    s.get("grid_signal", cfg.gp.grid_signal);
    s.get("grid_length", cfg.gp.grid_length);
    s.get("grid_noise", cfg.gp.grid_noise);
    s.get("refine_rounds", cfg.gp.refine_rounds);
    s.get("refine_evals", cfg.gp.refine_evals);
    s.get("max_points", cfg.gp.max_points);
    s.get("search_points", cfg.gp.search_points);
    s.finish();
  }
  if (const json* j = top.sub("eval_nll")) {
    Section s(*j, "eval_nll");
    s.get("n_tasks", cfg.nll.n_tasks);
    s.get("counts", cfg.nll.counts);
    s.get("max_test_points", cfg.nll.max_test_points);
    s.finish();
  }
  if (const json* j = top.sub("simulate")) {
    Section s(*j, "simulate");
    if (const json* sc = s.sub("scenes")) {
      if (!sc->is_array()) invalid("simulate.scenes must be an array");
      cfg.simulate.scenes.clear();
      for (const auto& item : *sc) {
        if (item.is_string()) {
          cfg.simulate.scenes.push_back(builtin_scene(item.get<std::string>()));
        } else if (item.is_object() && item.contains("name") && item.contains("environment")) {
          try {
            cfg.simulate.scenes.push_back({item.at("name").get<std::string>(),
                                           environment_from_json_string(item.at("environment").dump())});
          } catch (const std::exception& e) {
            invalid(std::string("bad scene: ") + e.what());
          }
        } else {
          invalid("scenes entries must be names or {name, environment}");
        }
      }
    }
    s.get("lidar_periods", cfg.simulate.lidar_periods);
    std::vector<std::string> backends;
    for (auto b : cfg.simulate.backends) backends.push_back(to_string(b));
    s.get("backends", backends);
    cfg.simulate.backends.clear();
    for (const auto& b : backends) cfg.simulate.backends.push_back(parse_backend(b));
    if (const json* g = s.sub("grid")) {
      Section gs(*g, "simulate.grid");
      read_box(gs, "region", cfg.simulate.grid.region);
      gs.get("nx", cfg.simulate.grid.nx);
      gs.get("ny", cfg.simulate.grid.ny);
      gs.finish();
    }
    if (const json* e = s.sub("episode")) {
      Section es(*e, "simulate.episode");
      auto& ep = cfg.simulate.episode;
      es.get("dt", ep.dt);
      es.get("T", ep.T);
      es.get("cse_period", ep.cse_period);
      std::vector<double> start{ep.start.qx, ep.start.qy, ep.start.theta};
      es.get("start", start);
      if (start.size() != 3) invalid("episode.start must be [qx, qy, theta]");
      ep.start = {start[0], start[1], start[2]};
      std::vector<double> goal{ep.goal.x(), ep.goal.y()};
      es.get("goal", goal);
      if (goal.size() != 2) invalid("episode.goal must be [x, y]");
      ep.goal = Vec2(goal[0], goal[1]);
      es.get("ell", ep.ell);
      es.get("delta", ep.delta);
      es.get("gamma_c", ep.gamma_c);
      es.get("gamma_v", ep.gamma_v);
      es.get("lambda", ep.lambda);
      es.get("v_max", ep.v_max);
      es.get("omega_max", ep.omega_max);
      es.finish();
    }
    s.finish();
  }
  if (const json* j = top.sub("desk_scale")) {
    Section s(*j, "desk_scale");
    s.get("n_iterations", cfg.desk.n_iterations);
    s.get("nll_tasks", cfg.desk.nll_tasks);
    s.finish();
  }
  top.finish();
  try {
    cfg.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    invalid(e.what());
  }
  return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  const auto& d = cfg.task.distribution;
  j["environment"] = {{"semi_axis", {d.semi_axis.lo, d.semi_axis.hi}},
                      {"center", {d.center.lo, d.center.hi}},
                      {"rotation", {d.rotation.lo, d.rotation.hi}},
                      {"family", family_to_string(d.family)},
                      {"polygon_min_vertices", d.polygon_min_vertices},
                      {"polygon_max_vertices", d.polygon_max_vertices},
                      {"clearance", d.clearance},
                      {"sampling_budget", d.sampling_budget},
                      {"boundary_segments", d.boundary_segments},
                      {"world_bounds", box_json(d.world_bounds)}};
  const auto& l = cfg.task.lidar;
  j["lidar"] = {{"n_rays", l.n_rays}, {"max_range", l.max_range}, {"range_noise_std", l.range_noise_std},
                {"angular_offset", l.angular_offset}};
  const auto& o = cfg.task.offsets;
  j["offsets"] = {{"delta", o.delta}, {"n_minus", o.n_minus}, {"n_plus", o.n_plus}};
  const auto& m = cfg.meta;
  j["meta"] = {{"n_iterations", m.n_iterations},
               {"tasks_per_iteration", m.tasks_per_iteration},
               {"learning_rate", m.learning_rate},
               {"adam_beta1", m.adam_beta1},
               {"adam_beta2", m.adam_beta2},
               {"adam_eps", m.adam_eps},
               {"gamma", m.gamma},
               {"sigma", m.sigma},
               {"lambda0_eps", m.lambda0_eps},
               {"init_precision", m.init_precision},
               {"max_task_points", m.max_task_points},
               {"train_features", m.train_features},
               {"probe_tasks", m.probe_tasks},
               {"probe_every", m.probe_every},
               {"probe_delta", m.probe_delta},
               {"ring_radius", cfg.task.ring_radius},
               {"n_poses", cfg.task.n_poses},
               {"net", {{"hidden", m.net.hidden}, {"output_dim", m.net.output_dim}, {"activation", to_string(m.net.activation)}}}};
  j["buffer"] = {{"eta", cfg.buffer.eta}, {"capacity", cfg.buffer.capacity}};
  const auto& g = cfg.gp;
  j["gp"] = {{"signal_var", {g.signal_var.lo, g.signal_var.hi}},
             {"length_scale", {g.length_scale.lo, g.length_scale.hi}},
             {"noise_var", {g.noise_var.lo, g.noise_var.hi}},
             {"grid_signal", g.grid_signal},
             {"grid_length", g.grid_length},
             {"grid_noise", g.grid_noise},
             {"refine_rounds", g.refine_rounds},
             {"refine_evals", g.refine_evals},
             {"max_points", g.max_points},
             {"search_points", g.search_points}};
  j["eval_nll"] = {{"n_tasks", cfg.nll.n_tasks}, {"counts", cfg.nll.counts}, {"max_test_points", cfg.nll.max_test_points}};
  ordered_json scenes = ordered_json::array();
  for (const auto& s : cfg.simulate.scenes) {
    scenes.push_back({{"name", s.name}, {"environment", ordered_json::parse(to_json_string(s.env))}});
  }
  std::vector<std::string> backends;
  for (auto b : cfg.simulate.backends) backends.push_back(to_string(b));
  const auto& ep = cfg.simulate.episode;
  j["simulate"] = {{"scenes", scenes},
                   {"lidar_periods", cfg.simulate.lidar_periods},
                   {"backends", backends},
                   {"grid", {{"region", box_json(cfg.simulate.grid.region)}, {"nx", cfg.simulate.grid.nx}, {"ny", cfg.simulate.grid.ny}}},
                   {"episode",
                    {{"dt", ep.dt},
                     {"T", ep.T},
                     {"cse_period", ep.cse_period},
                     {"start", {ep.start.qx, ep.start.qy, ep.start.theta}},
                     {"goal", {ep.goal.x(), ep.goal.y()}},
                     {"ell", ep.ell},
                     {"delta", ep.delta},
                     {"gamma_c", ep.gamma_c},
                     {"gamma_v", ep.gamma_v},
                     {"lambda", ep.lambda},
                     {"v_max", ep.v_max},
                     {"omega_max", ep.omega_max}}}};
  j["desk_scale"] = {{"n_iterations", cfg.desk.n_iterations}, {"nll_tasks", cfg.desk.nll_tasks}};
  return j.dump(2) + "\n";
}

}  // namespace cbfmeta
