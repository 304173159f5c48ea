#include "blowup/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "blowup/closedform.hpp"
#include "blowup/errors.hpp"
#include "blowup/feller.hpp"
#include "blowup/model.hpp"
#include "blowup/montecarlo.hpp"
#include "blowup/pde.hpp"
#include "blowup/survival_curve.hpp"

namespace blowup::cli {

namespace {

struct ModelOptions {
  std::string name;
  std::vector<std::string> params;  // name=value
  std::string s_source, b_source;
  std::vector<double> interval;  // lo hi
  bool differentiable_s = true;
  double xi = 1.0;

  expr::Bindings bindings() const {
    expr::Bindings out;
    for (const auto& kv : params) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("param: expected name=value, got '" + kv + "'");
      try {
        out[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
      } catch (const std::exception&) {
        throw ConfigError("param: bad numeric value in '" + kv + "'");
      }
    }
    return out;
  }

  DiffusionSpec build() const {
    DiffusionSpec spec;
    if (!name.empty()) {
      spec = model::builtin_catalog(name, bindings());
    } else {
      if (s_source.empty() || b_source.empty())
        throw ConfigError("model: give --model NAME or both --s and --b");
      if (interval.size() != 2)
        throw ConfigError("interval: expected two values LO HI");
      Interval iv{interval[0], interval[1]};
      spec = model::make_spec(iv, expr::Ast::parse(s_source),
                              expr::Ast::parse(b_source), differentiable_s, "custom");
    }
    if (!spec.interval.contains(xi))
      throw ConfigError("xi: must lie strictly inside the state interval");
    return spec;
  }

  std::map<std::string, std::string> describe() const {
    std::map<std::string, std::string> out;
    if (!name.empty()) {
      out["model"] = name;
      for (const auto& kv : params) out["param." + kv.substr(0, kv.find('='))] =
          kv.substr(kv.find('=') + 1);
    } else {
      out["s"] = s_source;
      out["b"] = b_source;
      if (interval.size() == 2) {
        out["interval.lo"] = curve::format_number(interval[0]);
        out["interval.hi"] = curve::format_number(interval[1]);
      }
    }
    out["xi"] = curve::format_number(xi);
    return out;
  }
};

struct GridOptions {
  double t_min = 0.5, t_max = 2.0;
  int t_count = 4;
  std::string t_scale = "linear";

  std::vector<double> grid() const {
    if (t_count < 1) throw ConfigError("T-count: must be at least 1");
    if (!(t_min > 0.0)) throw ConfigError("T-min: must be positive");
    if (t_count == 1) return {t_min};
    if (!(t_max > t_min)) throw ConfigError("T-max: must exceed T-min");
    std::vector<double> out;
    if (t_scale == "log") {
      const double ratio = std::pow(t_max / t_min, 1.0 / (t_count - 1));
      double v = t_min;
      for (int i = 0; i < t_count; ++i, v *= ratio) out.push_back(v);
    } else if (t_scale == "linear") {
      const double dt = (t_max - t_min) / (t_count - 1);
      for (int i = 0; i < t_count; ++i) out.push_back(t_min + i * dt);
    } else {
      throw ConfigError("T-scale: expected linear or log");
    }
    out.back() = t_max;
    return out;
  }
};

struct NumericOptions {
  long paths = 20000;
  uint64_t seed = 1;
  double step = 1e-3;
  std::string scheme = "euler_lamperti";
  int ladder_depth = 12;
  int threads = 0;
  int mesh = 1201;
  int time_steps = 400;
  double conv_tol = 1e-3;
  bool no_bridge = false;
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--model", m.name, "builtin model name (see `catalog`)");
  cmd->add_option("--param", m.params, "model parameter name=value (repeatable)");
  cmd->add_option("--s", m.s_source, "dispersion expression s(x) for custom models");
  cmd->add_option("--b", m.b_source, "drift expression b(x) for custom models");
  cmd->add_option("--interval", m.interval,
                  "state interval LO HI (use inf/-inf for half lines)")
      ->expected(2);
  cmd->add_flag("!--no-differentiable-s", m.differentiable_s,
                "do not differentiate s symbolically");
  cmd->add_option("--xi", m.xi, "starting position");
}

void add_grid_options(CLI::App* cmd, GridOptions& g) {
  cmd->add_option("--T-min", g.t_min, "smallest horizon");
  cmd->add_option("--T-max", g.t_max, "largest horizon");
  cmd->add_option("--T-count", g.t_count, "number of horizons");
  cmd->add_option("--T-scale", g.t_scale, "linear or log spacing");
}

void add_numeric_options(CLI::App* cmd, NumericOptions& n) {
  cmd->add_option("--paths", n.paths, "Monte Carlo sample size");
  cmd->add_option("--seed", n.seed, "random seed");
  cmd->add_option("--step", n.step, "base time step");
  cmd->add_option("--scheme", n.scheme,
                  "euler_raw | euler_lamperti | dds_exact | timechange_natural");
  cmd->add_option("--ladder-depth", n.ladder_depth, "truncation ladder depth");
  cmd->add_option("--threads", n.threads, "worker threads (0: BLOWUP_THREADS env)");
  cmd->add_option("--mesh", n.mesh, "space nodes for the innermost level");
  cmd->add_option("--time-steps", n.time_steps, "time steps for the solver");
  cmd->add_option("--conv-tol", n.conv_tol, "level-convergence tolerance");
  cmd->add_flag("--no-bridge", n.no_bridge, "disable within-step crossing correction");
}

mc::SimConfig make_sim_config(const DiffusionSpec& spec, const NumericOptions& n,
                              const std::vector<double>& grid) {
  mc::SimConfig cfg;
  cfg.step = n.step;
  cfg.n_paths = n.paths;
  cfg.seed = n.seed;
  cfg.ladder = model::default_ladder(spec.interval, n.ladder_depth);
  cfg.scheme = mc::scheme_from_string(n.scheme);
  cfg.t_grid = grid;
  cfg.threads = n.threads;
  cfg.bridge_correction = !n.no_bridge;
  return cfg;
}

SurvivalCurve closed_curve(const ModelOptions& m, const std::vector<double>& grid) {
  if (m.name.empty())
    throw ConfigError("method closed: only builtin models have closed forms");
  auto cf = closedform::for_model(m.name, m.bindings());
  if (!cf)
    throw ConfigError("method closed: no closed form for model '" + m.name +
                      "' at these parameters");
  SurvivalCurve curve;
  curve.method = "closed";
  for (double t : grid) {
    SurvivalCurve::Point pt;
    pt.t = t;
    pt.estimate = cf->survival(m.xi, t);
    curve.points.push_back(pt);
  }
  return curve;
}

void emit_curve(const SurvivalCurve& curve, const std::string& output,
                std::map<std::string, std::string> config, std::ostream& out) {
  if (output.empty() || output == "-") {
    curve::write_csv(out, curve, config);
    return;
  }
  std::ofstream file(output);
  if (!file) throw ConfigError("output: cannot open '" + output + "'");
  curve::write_csv(file, curve, config);
}

nlohmann::json verdict_json(const feller::BoundaryVerdict& v) {
  nlohmann::json side;
  side["side"] = v.side == feller::Side::left ? "left" : "right";
  side["method"] = feller::to_string(v.method);
  side["classification"] = feller::to_string(v.classification);
  if (std::isinf(v.v_limit))
    side["v_limit"] = "infinite";
  else if (std::isnan(v.v_limit))
    side["v_limit"] = nullptr;
  else
    side["v_limit"] = v.v_limit;
  nlohmann::json evidence = nlohmann::json::array();
  for (size_t i = 0; i < v.evidence_value.size(); ++i) {
    nlohmann::json item;
    if (i < v.evidence_x.size()) item["x"] = v.evidence_x[i];
    item["value"] = v.evidence_value[i];
    evidence.push_back(item);
  }
  side["evidence"] = evidence;
  return side;
}

SurvivalCurve read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("curve: cannot open '" + path + "'");
  SurvivalCurve curve;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    std::istringstream row(line);
    std::string field;
    SurvivalCurve::Point pt;
    std::getline(row, field, ',');
    pt.t = std::stod(field);
    std::getline(row, field, ',');
    pt.estimate = std::stod(field);
    if (std::getline(row, field, ',')) pt.stderr_ = std::stod(field);
    curve.points.push_back(pt);
  }
  if (curve.points.empty()) throw ConfigError("curve: no rows in '" + path + "'");
  return curve;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"explosion-time distributions of one-dimensional diffusions"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value configuration file with sections");
  app.get_config_formatter_base()->section("");

  ModelOptions m;
  GridOptions g;
  NumericOptions n;
  std::string output;
  std::string method = "closed";
  double lambda = 1.0;
  std::string curve_file;
  int classify_depth = 44;
  double anchor = std::numeric_limits<double>::quiet_NaN();

  auto* c_classify = app.add_subcommand("classify", "explosion test per boundary");
  add_model_options(c_classify, m);
  c_classify->add_option("--ladder-depth", classify_depth, "ladder depth for v sweeps");
  c_classify->add_option("--anchor", anchor, "anchor point (default: interval rule)");

  auto* c_survival = app.add_subcommand("survival", "survival curve P(S > T)");
  add_model_options(c_survival, m);
  add_grid_options(c_survival, g);
  add_numeric_options(c_survival, n);
  c_survival->add_option("--method", method, "closed | mc-direct | mc-fk | pde")
      ->required();
  c_survival->add_option("--output", output, "CSV destination (default stdout)");

  auto* c_resolvent = app.add_subcommand("resolvent", "transform value at lambda");
  add_model_options(c_resolvent, m);
  add_numeric_options(c_resolvent, n);
  c_resolvent->add_option("--lambda", lambda, "transform parameter")->required();
  c_resolvent->add_option("--curve", curve_file,
                          "survival CSV to test the transform identity against");

  auto* c_compare = app.add_subcommand("compare", "all applicable methods side by side");
  add_model_options(c_compare, m);
  add_grid_options(c_compare, g);
  add_numeric_options(c_compare, n);
  c_compare->add_option("--output", output, "CSV destination (default stdout)");

  app.add_subcommand("catalog", "list builtin models");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  }

  if (app.got_subcommand("catalog")) {
    out << "builtin models (survival of the explosion time S):\n";
    for (const auto& entry : model::catalog_entries()) {
      out << "  " << entry.name << "  s(x)=" << entry.s_source
          << "  b(x)=" << entry.b_source << "\n      " << entry.description << "\n";
      for (const auto& p : entry.params) {
        out << "      parameter " << p.name << " in " << (p.min_open ? "(" : "[")
            << (std::isinf(p.min) ? "-inf" : curve::format_number(p.min)) << ", "
            << (std::isinf(p.max) ? "inf" : curve::format_number(p.max))
            << (p.max_open ? ")" : "]") << ", default "
            << curve::format_number(p.default_value) << "\n";
      }
      out << "      closed form: " << (entry.has_closed_form ? "yes" : "no") << "\n";
    }
    return 0;
  }

  if (app.got_subcommand("classify")) {
    DiffusionSpec spec = m.build();
    const double c = std::isnan(anchor) ? model::default_anchor(spec.interval) : anchor;
    auto ladder = model::default_ladder(spec.interval, classify_depth, c);
    auto report = feller::classify(spec, ladder);
    nlohmann::json j;
    j["model"] = report.label;
    j["overall"] = feller::to_string(report.overall);
    j["left"] = verdict_json(report.left);
    j["right"] = verdict_json(report.right);
    out << j.dump(2) << "\n";
    return 0;
  }

  if (app.got_subcommand("survival")) {
    DiffusionSpec spec = m.build();
    const auto grid = g.grid();
    auto config = m.describe();
    config["method"] = method;
    SurvivalCurve curve;
    if (method == "closed") {
      curve = closed_curve(m, grid);
    } else if (method == "mc-direct") {
      curve = mc::estimate_survival_direct(spec, m.xi, make_sim_config(spec, n, grid));
      config["seed"] = std::to_string(n.seed);
      config["paths"] = std::to_string(n.paths);
      config["scheme"] = n.scheme;
      config["step"] = curve::format_number(n.step);
    } else if (method == "mc-fk") {
      curve = mc::estimate_survival_feynman_kac(spec, m.xi,
                                                make_sim_config(spec, n, grid));
      config["seed"] = std::to_string(n.seed);
      config["paths"] = std::to_string(n.paths);
      config["scheme"] = n.scheme;
      config["step"] = curve::format_number(n.step);
    } else if (method == "pde") {
      pde::SolverOptions sopt;
      sopt.space_nodes = n.mesh;
      sopt.time_nodes = n.time_steps;
      auto ladder = model::default_ladder(spec.interval, n.ladder_depth);
      curve = pde::minimal_survival(spec, m.xi, grid, ladder, n.conv_tol, sopt);
      config["mesh"] = std::to_string(n.mesh);
      config["time_steps"] = std::to_string(n.time_steps);
      config["conv_tol"] = curve::format_number(n.conv_tol);
    } else {
      throw ConfigError("method: expected closed, mc-direct, mc-fk or pde");
    }
    emit_curve(curve, output, config, out);
    return 0;
  }

  if (app.got_subcommand("resolvent")) {
    DiffusionSpec spec = m.build();
    auto ladder = model::default_ladder(spec.interval, n.ladder_depth);
    pde::SolverOptions sopt;
    sopt.space_nodes = n.mesh;
    const double u_hat = pde::resolvent_limit(spec, ladder, lambda, m.xi,
                                              n.conv_tol * 1e-1, sopt);
    out << "u_hat(" << curve::format_number(m.xi)
        << ") = " << curve::format_number(u_hat) << "\n";
    if (!curve_file.empty()) {
      auto curve = read_curve_csv(curve_file);
      const double residual = pde::laplace_consistency(curve, u_hat, lambda);
      out << "laplace_residual = " << curve::format_number(residual) << "\n";
    }
    return 0;
  }

  if (app.got_subcommand("compare")) {
    DiffusionSpec spec = m.build();
    const auto grid = g.grid();
    std::vector<std::pair<std::string, SurvivalCurve>> curves;
    if (!m.name.empty()) {
      if (auto cf = closedform::for_model(m.name, m.bindings()))
        curves.emplace_back("closed", closed_curve(m, grid));
    }
    curves.emplace_back(
        "mc-direct", mc::estimate_survival_direct(spec, m.xi,
                                                  make_sim_config(spec, n, grid)));
    if (spec.f_locally_square_integrable || spec.f_continuously_differentiable) {
      try {
        curves.emplace_back("mc-fk", mc::estimate_survival_feynman_kac(
                                         spec, m.xi, make_sim_config(spec, n, grid)));
      } catch (const ConfigError&) {
        // weighted route unavailable for this spec/scheme combination
      }
    }
    {
      pde::SolverOptions sopt;
      sopt.space_nodes = n.mesh;
      sopt.time_nodes = n.time_steps;
      auto ladder = model::default_ladder(spec.interval, n.ladder_depth);
      curves.emplace_back("pde", pde::minimal_survival(spec, m.xi, grid, ladder,
                                                       n.conv_tol, sopt));
    }

    std::ostringstream csv;
    auto config = m.describe();
    csv << "# blowup compare\n# config:";
    for (const auto& kv : config) csv << " " << kv.first << "=" << kv.second;
    csv << " seed=" << n.seed << " paths=" << n.paths << "\n";
    csv << "T";
    for (const auto& c : curves) csv << "," << c.first;
    csv << "\n";
    double max_disc = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
      csv << curve::format_number(grid[i]);
      for (const auto& c : curves) csv << "," << curve::format_number(c.second.points[i].estimate);
      csv << "\n";
      for (size_t a = 0; a < curves.size(); ++a)
        for (size_t b = a + 1; b < curves.size(); ++b)
          max_disc = std::max(max_disc,
                              std::fabs(curves[a].second.points[i].estimate -
                                        curves[b].second.points[i].estimate));
    }
    csv << "# max_pairwise_discrepancy=" << curve::format_number(max_disc) << "\n";
    if (output.empty() || output == "-") {
      out << csv.str();
    } else {
      std::ofstream file(output);
      if (!file) throw ConfigError("output: cannot open '" + output + "'");
      file << csv.str();
      out << "max_pairwise_discrepancy=" << curve::format_number(max_disc) << "\n";
    }
    return 0;
  }

  err << "config error: no subcommand\n";
  return 2;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(argc, argv, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace blowup::cli
