// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "cv2x/rng.hpp"

#ifndef CV2X_VERSION
#define CV2X_VERSION "0.0.0"
#endif

namespace cv2x {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError(fmt::format("bad value '{}' for key '{}': expected {}", value, key, want));
}

double parse_double(std::string_view key, std::string_view text) {
  const auto v = trim(text);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, text, "a number");
  return out;
}

template <class Int>
Int parse_int(std::string_view key, std::string_view text) {
  const auto v = trim(text);
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, text, "an integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  std::string v(trim(text));
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, text, "true or false");
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> out;
  auto v = trim(text);
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = trim(v.substr(1, v.size() - 2));
  if (v.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = v.find(',', pos);
    out.push_back(trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

InterpTable load_table(std::string_view key, std::string_view path, bool probabilities) {
  InterpTable t;
  try {
    t = load_table_file(std::filesystem::path(std::string(trim(path))));
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("key '{}': {}", key, e.what()));
  }
  if (t.points().size() < 2) throw ConfigError(fmt::format("key '{}': table needs at least two rows", key));
  if (probabilities)
    for (const auto& [x, y] : t.points())
      if (!(y >= 0.0 && y <= 1.0))
        throw ConfigError(fmt::format("key '{}': BLER {} at SINR {} outside [0, 1]", key, y, x));
  return t;
}

struct KeyDef {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Acc>
KeyDef real(std::string name, Acc acc) {
  return {name, [acc, name](RunConfig& c, std::string_view v) { acc(c) = parse_double(name, v); },
          [acc](const RunConfig& c) { return format_double(acc(c)); }};
}

template <class Acc>
KeyDef integer(std::string name, Acc acc) {
  return {name,
          [acc, name](RunConfig& c, std::string_view v) {
            using T = std::remove_reference_t<decltype(acc(c))>;
            acc(c) = parse_int<T>(name, v);
          },
          [acc](const RunConfig& c) { return std::to_string(acc(c)); }};
}

template <class Acc>
KeyDef boolean(std::string name, Acc acc) {
  return {name, [acc, name](RunConfig& c, std::string_view v) { acc(c) = parse_bool(name, v); },
          [acc](const RunConfig& c) { return std::string(acc(c) ? "true" : "false"); }};
}

template <class Acc>
KeyDef text(std::string name, Acc acc) {
  return {name, [acc](RunConfig& c, std::string_view v) { acc(c) = std::string(trim(v)); },
          [acc](const RunConfig& c) { return std::string(acc(c)); }};
}

template <class Acc>
KeyDef id_list(std::string name, Acc acc) {
  return {name,
          [acc, name](RunConfig& c, std::string_view v) {
            auto& out = acc(c);
            out.clear();
            for (auto item : split_list(v)) out.push_back(parse_int<std::uint32_t>(name, item));
          },
          [acc](const RunConfig& c) { return join(acc(c)); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return c.expr; }

std::vector<KeyDef> build_registry() {
  std::vector<KeyDef> r;
  r.push_back(integer("run.seeds", FIELD(seeds)));

  r.push_back(real("scenario.highway_length_m", FIELD(engine.scenario.highway_length_m)));
  r.push_back(real("scenario.density_vpk", FIELD(engine.scenario.density_vpk)));
  r.push_back(integer("scenario.bandwidth_mhz", FIELD(engine.scenario.bandwidth_mhz)));
  r.push_back(integer("scenario.subchannels_per_subframe", FIELD(engine.scenario.subchannels_per_subframe)));
  r.push_back(integer("scenario.prbs_per_subchannel", FIELD(engine.scenario.prbs_per_subchannel)));
  r.push_back(integer("scenario.subchannels_per_bsm", FIELD(engine.scenario.subchannels_per_bsm)));
  r.push_back(integer("scenario.pscch_prbs", FIELD(engine.scenario.pscch_prbs)));
  r.push_back(real("scenario.tx_power_dbm", FIELD(engine.scenario.tx_power_dbm)));
  r.push_back(real("scenario.pscch_boost_db", FIELD(engine.scenario.pscch_boost_db)));
  r.push_back(real("scenario.noise_figure_db", FIELD(engine.scenario.noise_figure_db)));
  r.push_back(real("scenario.thermal_noise_dbm_per_hz", FIELD(engine.scenario.thermal_noise_dbm_per_hz)));
  r.push_back(real("scenario.sinr_threshold_pssch_db", FIELD(engine.scenario.sinr_threshold_pssch_db)));
  r.push_back(real("scenario.sinr_threshold_pscch_db", FIELD(engine.scenario.sinr_threshold_pscch_db)));
  r.push_back(real("scenario.sim_duration_s", FIELD(engine.scenario.sim_duration_s)));
  r.push_back(real("scenario.warmup_s", FIELD(engine.scenario.warmup_s)));
  r.push_back(real("scenario.stats_region_lo", FIELD(engine.scenario.stats_region_lo)));
  r.push_back(real("scenario.stats_region_hi", FIELD(engine.scenario.stats_region_hi)));
  r.push_back(integer("scenario.master_seed", FIELD(engine.scenario.master_seed)));

  r.push_back(integer("sps.t1_ms", FIELD(engine.sps.t1_ms)));
  r.push_back(integer("sps.pdb_ms", FIELD(engine.sps.pdb_ms)));
  r.push_back(integer("sps.cs_min", FIELD(engine.sps.cs_min)));
  r.push_back(integer("sps.cs_max", FIELD(engine.sps.cs_max)));
  r.push_back(real("sps.keep_prob", FIELD(engine.sps.keep_prob)));
  r.push_back({"sps.oneshot",
               [](RunConfig& c, std::string_view v) {
                 const auto t = trim(v);
                 if (t == "off" || t == "none" || t.empty()) {
                   c.engine.sps.oneshot.reset();
                   return;
                 }
                 const auto items = split_list(t);
                 if (items.size() != 2) bad_value("sps.oneshot", v, "off or alpha,beta");
                 c.engine.sps.oneshot = OneShotWindow{parse_int<int>("sps.oneshot", items[0]),
                                                      parse_int<int>("sps.oneshot", items[1])};
               },
               [](const RunConfig& c) {
                 const auto& o = c.engine.sps.oneshot;
                 return o ? fmt::format("{},{}", o->alpha, o->beta) : std::string("off");
               }});
  r.push_back(integer("sps.esps_max_intervals", FIELD(engine.sps.esps_max_intervals)));
  r.push_back(real("sps.rsrp_exclude_threshold_dbm_init", FIELD(engine.sps.rsrp_exclude_threshold_dbm_init)));
  r.push_back(real("sps.rsrp_threshold_step_db", FIELD(engine.sps.rsrp_threshold_step_db)));
  r.push_back(real("sps.candidate_fraction", FIELD(engine.sps.candidate_fraction)));
  r.push_back(real("sps.cbr_rssi_threshold_dbm", FIELD(engine.sps.cbr_rssi_threshold_dbm)));
  r.push_back(integer("sps.sensing_depth_ms", FIELD(engine.sps.sensing_depth_ms)));

  r.push_back(boolean("congestion.enabled", FIELD(engine.congestion.enabled)));
  r.push_back(real("congestion.radius_m", FIELD(engine.congestion.radius_m)));
  r.push_back(real("congestion.i_max_ms", FIELD(engine.congestion.i_max_ms)));
  r.push_back(real("congestion.density_coeff", FIELD(engine.congestion.density_coeff)));
  r.push_back(real("congestion.lambda", FIELD(engine.congestion.lambda)));
  r.push_back(real("congestion.base_interval_ms", FIELD(engine.congestion.base_interval_ms)));
  r.push_back(integer("congestion.update_period_ms", FIELD(engine.congestion.update_period_ms)));
  r.push_back(integer("congestion.window_ms", FIELD(engine.congestion.window_ms)));

  r.push_back({"metrics.ccdf_bins_m",
               [](RunConfig& c, std::string_view v) {
                 auto& bins = c.engine.metrics.ccdf_bins_m;
                 bins.clear();
                 for (auto item : split_list(v)) bins.push_back(parse_double("metrics.ccdf_bins_m", item));
               },
               [](const RunConfig& c) { return join(c.engine.metrics.ccdf_bins_m); }});
  r.push_back(real("metrics.bin_half_width_m", FIELD(engine.metrics.bin_half_width_m)));
  r.push_back(real("metrics.eval_radius_m", FIELD(engine.metrics.eval_radius_m)));
  r.push_back(integer("metrics.long_ipg_ms", FIELD(engine.metrics.long_ipg_ms)));

  r.push_back({"channel.pathloss",
               [](RunConfig& c, std::string_view v) {
                 const auto t = trim(v);
                 if (t == "log_distance")
                   c.engine.pathloss.kind = PathlossModel::Kind::log_distance;
                 else if (t == "table")
                   c.engine.pathloss.kind = PathlossModel::Kind::table;
                 else
                   bad_value("channel.pathloss", v, "log_distance or table");
               },
               [](const RunConfig& c) {
                 return std::string(c.engine.pathloss.kind == PathlossModel::Kind::table ? "table" : "log_distance");
               }});
  r.push_back({"channel.pathloss_table",
               [](RunConfig& c, std::string_view v) {
                 c.pathloss_table = std::string(trim(v));
                 c.engine.pathloss.table =
                     c.pathloss_table.empty() ? InterpTable{} : load_table("channel.pathloss_table", v, false);
               },
               [](const RunConfig& c) { return c.pathloss_table; }});
  r.push_back(real("channel.pl0_db", FIELD(engine.pathloss.pl0_db)));
  r.push_back(real("channel.d0_m", FIELD(engine.pathloss.d0_m)));
  r.push_back(real("channel.exponent", FIELD(engine.pathloss.exponent)));
  r.push_back(real("channel.d_min_m", FIELD(engine.pathloss.d_min_m)));
  r.push_back({"channel.ibe_db",
               [](RunConfig& c, std::string_view v) {
                 auto& att = c.engine.ibe.attenuation_db;
                 att.clear();
                 for (auto item : split_list(v)) att.push_back(parse_double("channel.ibe_db", item));
               },
               [](const RunConfig& c) { return join(c.engine.ibe.attenuation_db); }});
  r.push_back(boolean("channel.fading", FIELD(engine.fading)));
  r.push_back({"channel.reception",
               [](RunConfig& c, std::string_view v) {
                 const auto t = trim(v);
                 if (t == "threshold")
                   c.engine.reception.kind = ReceptionModel::Kind::threshold;
                 else if (t == "bler")
                   c.engine.reception.kind = ReceptionModel::Kind::bler;
                 else
                   bad_value("channel.reception", v, "threshold or bler");
               },
               [](const RunConfig& c) {
                 return std::string(c.engine.reception.kind == ReceptionModel::Kind::bler ? "bler" : "threshold");
               }});
  r.push_back({"channel.bler_pssch",
               [](RunConfig& c, std::string_view v) {
                 c.bler_pssch_table = std::string(trim(v));
                 c.engine.reception.bler_pssch =
                     c.bler_pssch_table.empty() ? InterpTable{} : load_table("channel.bler_pssch", v, true);
               },
               [](const RunConfig& c) { return c.bler_pssch_table; }});
  r.push_back({"channel.bler_pscch",
               [](RunConfig& c, std::string_view v) {
                 c.bler_pscch_table = std::string(trim(v));
                 c.engine.reception.bler_pscch =
                     c.bler_pscch_table.empty() ? InterpTable{} : load_table("channel.bler_pscch", v, true);
               },
               [](const RunConfig& c) { return c.bler_pscch_table; }});

  r.push_back({"engine.kernel",
               [](RunConfig& c, std::string_view v) {
                 const auto t = trim(v);
                 if (t == "serial")
                   c.engine.kernel = KernelKind::serial;
                 else if (t == "openmp")
                   c.engine.kernel = KernelKind::openmp;
                 else
                   bad_value("engine.kernel", v, "serial or openmp");
               },
               [](const RunConfig& c) {
                 return std::string(c.engine.kernel == KernelKind::openmp ? "openmp" : "serial");
               }});
  r.push_back(integer("engine.threads", FIELD(engine.threads)));

  r.push_back({"trace.scheduler_csv", [](RunConfig& c, std::string_view v) { c.engine.trace.scheduler_csv = std::string(trim(v)); },
               [](const RunConfig& c) { return c.engine.trace.scheduler_csv.string(); }});
  r.push_back(id_list("trace.scheduler_vehicles", FIELD(engine.trace.scheduler_vehicles)));
  r.push_back({"trace.congestion_csv", [](RunConfig& c, std::string_view v) { c.engine.trace.congestion_csv = std::string(trim(v)); },
               [](const RunConfig& c) { return c.engine.trace.congestion_csv.string(); }});
  r.push_back(id_list("trace.congestion_vehicles", FIELD(engine.trace.congestion_vehicles)));
  r.push_back({"trace.event_log", [](RunConfig& c, std::string_view v) { c.engine.trace.event_log = std::string(trim(v)); },
               [](const RunConfig& c) { return c.engine.trace.event_log.string(); }});
  return r;
}

#undef FIELD

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> r = build_registry();
  return r;
}

const KeyDef& find_key(std::string_view key) {
  for (const auto& k : registry())
    if (k.name == key) return k;
  throw ConfigError(fmt::format("unknown key '{}'", key));
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_table(std::uint64_t h, const InterpTable& t) {
  for (const auto& [x, y] : t.points()) h = fnv1a(h, format_double(x) + ' ' + format_double(y) + '\n');
  return h;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& k : registry()) out.push_back(k.name);
    return out;
  }();
  return keys;
}

void set_key(RunConfig& cfg, std::string_view key, std::string_view value) { find_key(key).set(cfg, value); }

std::string get_key(const RunConfig& cfg, std::string_view key) { return find_key(key).get(cfg); }

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError(fmt::format("override '{}' is not section.key=value", assignment));
  set_key(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void apply_ini(RunConfig& cfg, std::istream& in, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", origin, e.line(), e.message()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty())
      throw ConfigError(fmt::format("{}: key '{}' outside a section", origin, section));
    for (const auto& [key, node] : body) {
      try {
        set_key(cfg, section + "." + key, node.data());
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", origin, e.what()));
      }
    }
  }
}

void apply_ini_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  apply_ini(cfg, in, path.string());
}

std::string canonical_dump(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : registry()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += '[' + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(cfg) + '\n';
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, canonical_dump(cfg));
  h = hash_table(h, cfg.engine.pathloss.table);
  h = hash_table(h, cfg.engine.reception.bler_pssch);
  h = hash_table(h, cfg.engine.reception.bler_pscch);
  return mix64(h);
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

void apply_preset(RunConfig& cfg, std::string_view name) {
  if (name == "desk") {
    cfg.engine.scenario.sim_duration_s = 60.0;
    cfg.engine.scenario.highway_length_m = 2000.0;
    cfg.seeds = 2;
  } else {
    throw ConfigError(fmt::format("unknown preset '{}'", name));
  }
}

void validate(const RunConfig& cfg) {
  if (cfg.seeds < 1) throw InvalidConfig("invalid-config: run.seeds >= 1");
  for (const auto* t : {&cfg.engine.reception.bler_pssch, &cfg.engine.reception.bler_pscch})
    for (const auto& [x, y] : t->points())
      if (!(y >= 0.0 && y <= 1.0)) throw InvalidConfig("invalid-config: BLER values in [0, 1]");
  validate(cfg.engine);
}

std::string variant_label(const SpsConfig& sps) {
  if (!sps.oneshot) return "off";
  const auto& o = *sps.oneshot;
  if (o.alpha == 5 && o.beta == 15) return "515";
  if (o.alpha == 2 && o.beta == 6) return "26";
  return fmt::format("{}-{}", o.alpha, o.beta);
}

const char* version_string() { return "cv2x-sim " CV2X_VERSION; }

}  // namespace cv2x
