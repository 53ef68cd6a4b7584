#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <bht/config.hpp>
#include <bht/io.hpp>
#include <bht/presets.hpp>
#include <bht/protocols.hpp>

// Command line front end.  `run` executes one protocol from config fields
// plus overrides and writes results.csv, spectrum.csv and fringes.csv when
// the protocol emits them, and meta.json; `list-protocols` prints the
// catalog.  Errors leave a JSON record on stderr and a nonzero exit code:
// 1 runtime, 2 usage, 3 validation.  A given config and seed produce byte
// identical results.csv whatever --jobs is.

namespace bht {

inline constexpr const char* kCliVersion = "1.0.0";

struct ProtocolEntry {
  std::string name;
  std::string summary;
  Schema schema;
  std::function<void(const ConfigPoint&, std::vector<std::string>&)> check;
  std::function<ProtocolResult(const ConfigPoint&)> run;
};

namespace detail {

inline FieldSpec num_field(std::string key, std::string fallback, double min,
                           double max, std::string help,
                           bool sweepable = false) {
  FieldSpec f;
  f.key = std::move(key);
  f.fallback = std::move(fallback);
  f.help = std::move(help);
  f.sweepable = sweepable;
  f.min = min;
  f.max = max;
  return f;
}

inline FieldSpec count_field(std::string key, std::string fallback,
                             double min, double max, std::string help,
                             bool sweepable = false) {
  FieldSpec f = num_field(std::move(key), std::move(fallback), min, max,
                          std::move(help), sweepable);
  f.integer = true;
  return f;
}

inline FieldSpec list_field(std::string key, std::string fallback,
                            double min, double max, std::string help) {
  FieldSpec f = num_field(std::move(key), std::move(fallback), min, max,
                          std::move(help));
  f.kind = FieldKind::number_list;
  return f;
}

inline FieldSpec choice_field(std::string key, std::string fallback,
                              std::vector<std::string> choices,
                              std::string help) {
  FieldSpec f;
  f.key = std::move(key);
  f.kind = FieldKind::text;
  f.fallback = std::move(fallback);
  f.help = std::move(help);
  f.choices = std::move(choices);
  return f;
}

inline FieldSpec toggle_field(std::string key, std::string fallback,
                              std::string help) {
  FieldSpec f;
  f.key = std::move(key);
  f.kind = FieldKind::toggle;
  f.fallback = std::move(fallback);
  f.help = std::move(help);
  return f;
}

inline FieldSpec preset_field(std::string fallback) {
  return choice_field("preset", std::move(fallback), {"5-qubit", "7-qubit"},
                      "lattice preset");
}

inline FieldSpec seed_field() {
  return count_field("seed", "1", 0, 9.0e15, "base RNG seed");
}

inline DevicePreset device_for(const std::string& name) {
  return name == "5-qubit" ? five_site_device() : seven_site_device();
}

inline AncillaPrep prep_for(const std::string& name) {
  if (name == "ground") return AncillaPrep::ground;
  if (name == "excited") return AncillaPrep::excited;
  return AncillaPrep::superposition;
}

inline void check_hold_grid(const ConfigPoint& p,
                            std::vector<std::string>& problems) {
  if (p.num("hold_max_ns") < p.num("hold_step_ns"))
    problems.push_back(
        "hold grid needs at least two samples: hold_max_ns < hold_step_ns");
}

inline void check_groups(const ConfigPoint& p,
                         std::vector<std::string>& problems) {
  const int shots = static_cast<int>(p.num("shots"));
  const int groups = static_cast<int>(p.num("groups"));
  if (shots > 0 && shots % groups != 0)
    problems.push_back("shots must split evenly into groups");
}

inline std::vector<ProtocolEntry> build_catalog() {
  std::vector<ProtocolEntry> cat;

  {
    ProtocolEntry e;
    e.name = "conditional-transport";
    e.summary =
        "ramp the injected pair against the barrier and read how the "
        "ancilla state gates transport";
    e.schema = {preset_field("7-qubit"),
                choice_field("ancilla", "ground",
                             {"ground", "excited", "superposition"},
                             "ancilla preparation"),
                num_field("t_ramp_ns", "960", 1, 1e7,
                          "stagger ramp duration", true),
                num_field("tau_fraction", "0.5", 0.01, 10,
                          "ramp time constant over duration", true),
                count_field("shots", "0", 0, 1e6,
                            "sampled trajectories; 0 runs exact"),
                toggle_field("noise", "off", "decay and dephasing channels"),
                count_field("track_steps", "80", 2, 1e4,
                            "eigenstate tracking resolution"),
                seed_field()};
    e.run = [](const ConfigPoint& p) {
      TransportOptions opt;
      opt.device = device_for(p.text("preset"));
      opt.prep = prep_for(p.text("ancilla"));
      opt.t_ramp = ns(p.num("t_ramp_ns"));
      opt.tau_fraction = p.num("tau_fraction");
      opt.shots = static_cast<int>(p.num("shots"));
      opt.with_noise = p.toggle("noise");
      opt.track_steps = static_cast<int>(p.num("track_steps"));
      opt.seed = static_cast<std::uint64_t>(p.num("seed"));
      return run_conditional_transport(opt);
    };
    cat.push_back(std::move(e));
  }

  {
    ProtocolEntry e;
    e.name = "echo";
    e.summary =
        "insert a flip pulse between entangler cycles and compare fringe "
        "contrast with the plain sequence";
    e.schema = {preset_field("5-qubit"),
                num_field("t_ramp_ns", "240", 1, 1e7,
                          "stagger ramp duration", true),
                num_field("tau_fraction", "0.5", 0.01, 10,
                          "ramp time constant over duration", true),
                count_field("n_pairs", "1", 1, 64,
                            "entangler cycles before the flip", true),
                num_field("sigma_mhz", "1", 0, 50,
                          "static detuning scatter per shot", true),
                count_field("shots", "200", 0, 1e6,
                            "sampled trajectories; 0 runs exact"),
                count_field("groups", "10", 1, 1e6,
                            "shot groups for jackknife errors"),
                toggle_field("sample_readout", "off",
                             "Bernoulli readout even at sigma_mhz = 0"),
                num_field("hold_max_ns", "200", 1, 1e6, "longest hold"),
                num_field("hold_step_ns", "1", 0.125, 1e4, "hold spacing"),
                seed_field()};
    e.check = [](const ConfigPoint& p, std::vector<std::string>& problems) {
      check_hold_grid(p, problems);
      check_groups(p, problems);
      if (p.num("sigma_mhz") > 0 && p.num("shots") == 0)
        problems.push_back("sigma_mhz > 0 needs shots > 0");
    };
    e.run = [](const ConfigPoint& p) {
      EchoOptions opt;
      opt.device = device_for(p.text("preset"));
      opt.t_ramp = ns(p.num("t_ramp_ns"));
      opt.tau_fraction = p.num("tau_fraction");
      opt.n_pairs = static_cast<int>(p.num("n_pairs"));
      opt.sigma = mhz(p.num("sigma_mhz"));
      opt.shots = static_cast<int>(p.num("shots"));
      opt.groups = static_cast<int>(p.num("groups"));
      opt.sample_readout = p.toggle("sample_readout");
      opt.hold_max = ns(p.num("hold_max_ns"));
      opt.hold_step = ns(p.num("hold_step_ns"));
      opt.seed = static_cast<std::uint64_t>(p.num("seed"));
      return run_echo(opt);
    };
    cat.push_back(std::move(e));
  }

  {
    ProtocolEntry e;
    e.name = "noon-ramsey";
    e.summary =
        "carry the ancilla superposition through the entangling ramp and "
        "fold the hold-time fringe spectrum";
    e.schema = {preset_field("7-qubit"),
                num_field("t_ramp_ns", "240", 1, 1e7,
                          "stagger ramp duration", true),
                num_field("tau_fraction", "0.5", 0.01, 10,
                          "ramp time constant over duration", true),
                num_field("hold_max_ns", "200", 1, 1e6, "longest hold"),
                num_field("hold_step_ns", "1", 0.125, 1e4, "hold spacing"),
                count_field("shots", "0", 0, 1e6,
                            "sampled trajectories; 0 runs exact"),
                count_field("groups", "1", 1, 1e6,
                            "shot groups for jackknife errors"),
                toggle_field("noise", "off", "decay and dephasing channels"),
                toggle_field("sample_readout", "off",
                             "Bernoulli readout sampling"),
                seed_field()};
    e.check = [](const ConfigPoint& p, std::vector<std::string>& problems) {
      check_hold_grid(p, problems);
      check_groups(p, problems);
    };
    e.run = [](const ConfigPoint& p) {
      NoonOptions opt;
      opt.device = device_for(p.text("preset"));
      opt.t_ramp = ns(p.num("t_ramp_ns"));
      opt.tau_fraction = p.num("tau_fraction");
      opt.hold_max = ns(p.num("hold_max_ns"));
      opt.hold_step = ns(p.num("hold_step_ns"));
      opt.shots = static_cast<int>(p.num("shots"));
      opt.groups = static_cast<int>(p.num("groups"));
      opt.with_noise = p.toggle("noise");
      opt.sample_readout = p.toggle("sample_readout");
      opt.seed = static_cast<std::uint64_t>(p.num("seed"));
      return run_noon_ramsey(opt);
    };
    cat.push_back(std::move(e));
  }

  {
    ProtocolEntry e;
    e.name = "phonon-swap";
    e.summary =
        "drive the barrier weakly to exchange the fluid pair across it "
        "while the pinned solid ignores the tone";
    e.schema = {preset_field("5-qubit"),
                num_field("t_ramp_ns", "240", 1, 1e7,
                          "stagger ramp duration", true),
                num_field("tau_fraction", "0.5", 0.01, 10,
                          "ramp time constant over duration", true),
                num_field("drive_amplitude_mhz", "1", 0.01, 20,
                          "drive tone amplitude", true),
                num_field("drive_mhz", "0", 0, 1000,
                          "scan center; 0 derives the two-quantum resonance",
                          true),
                list_field("durations_ns", "1200,2400,3600", 1, 1e7,
                           "drive durations for the transfer scan"),
                count_field("n_freq", "25", 3, 401, "scan points"),
                num_field("band", "0.05", 0.001, 0.5,
                          "scan half width as a fraction of the center"),
                list_field("fringe_durations_ns", "0,900,1800,2700,3600", 0,
                           1e7, "drive times for the conditional fringe"),
                num_field("hold_max_ns", "200", 1, 1e6, "longest hold"),
                num_field("hold_step_ns", "1", 0.125, 1e4, "hold spacing"),
                count_field("shots", "0", 0, 1e6,
                            "sampled trajectories; 0 runs exact"),
                toggle_field("noise", "off", "decay and dephasing channels"),
                count_field("track_steps", "160", 2, 1e4,
                            "splitting continuation resolution"),
                seed_field()};
    e.check = [](const ConfigPoint& p, std::vector<std::string>& problems) {
      check_hold_grid(p, problems);
      if (p.nums("durations_ns").empty())
        problems.push_back("durations_ns must list at least one duration");
      if (device_for(p.text("preset")).drive_site < 0)
        problems.push_back("preset '" + p.text("preset") +
                           "' has no drive site");
    };
    e.run = [](const ConfigPoint& p) {
      PhononOptions opt;
      opt.device = device_for(p.text("preset"));
      opt.t_ramp = ns(p.num("t_ramp_ns"));
      opt.tau_fraction = p.num("tau_fraction");
      opt.drive_amplitude = mhz(p.num("drive_amplitude_mhz"));
      opt.drive_center = mhz(p.num("drive_mhz"));
      opt.durations.clear();
      for (double t : p.nums("durations_ns")) opt.durations.push_back(ns(t));
      opt.n_freq = static_cast<int>(p.num("n_freq"));
      opt.band = p.num("band");
      opt.fringe_durations.clear();
      for (double t : p.nums("fringe_durations_ns"))
        opt.fringe_durations.push_back(ns(t));
      opt.hold_max = ns(p.num("hold_max_ns"));
      opt.hold_step = ns(p.num("hold_step_ns"));
      opt.shots = static_cast<int>(p.num("shots"));
      opt.with_noise = p.toggle("noise");
      opt.track_steps = static_cast<int>(p.num("track_steps"));
      opt.seed = static_cast<std::uint64_t>(p.num("seed"));
      return run_phonon_swap(opt);
    };
    cat.push_back(std::move(e));
  }

  {
    ProtocolEntry e;
    e.name = "ramp-sweep";
    e.summary =
        "scan the ramp duration from sudden to adiabatic and count the "
        "fringe peaks in each regime";
    e.schema = {preset_field("5-qubit"),
                num_field("t_ramp_min_ns", "4", 0.5, 1e7, "shortest ramp"),
                num_field("t_ramp_max_ns", "2000", 1, 1e7, "longest ramp"),
                count_field("n_points", "22", 2, 500,
                            "log spaced ramp durations"),
                num_field("tau_fraction", "0.5", 0.01, 10,
                          "ramp time constant over duration", true),
                num_field("hold_max_ns", "200", 1, 1e6, "longest hold"),
                num_field("hold_step_ns", "1", 0.125, 1e4, "hold spacing"),
                num_field("peak_floor", "0.05", 0.001, 1,
                          "peak threshold relative to the strongest"),
                seed_field()};
    e.check = [](const ConfigPoint& p, std::vector<std::string>& problems) {
      check_hold_grid(p, problems);
      if (p.num("t_ramp_max_ns") <= p.num("t_ramp_min_ns"))
        problems.push_back("t_ramp_max_ns must exceed t_ramp_min_ns");
    };
    e.run = [](const ConfigPoint& p) {
      RampSweepOptions opt;
      opt.device = device_for(p.text("preset"));
      opt.t_ramp_min = ns(p.num("t_ramp_min_ns"));
      opt.t_ramp_max = ns(p.num("t_ramp_max_ns"));
      opt.n_points = static_cast<int>(p.num("n_points"));
      opt.tau_fraction = p.num("tau_fraction");
      opt.hold_max = ns(p.num("hold_max_ns"));
      opt.hold_step = ns(p.num("hold_step_ns"));
      opt.peak_floor = p.num("peak_floor");
      opt.seed = static_cast<std::uint64_t>(p.num("seed"));
      return run_ramp_sweep(opt);
    };
    cat.push_back(std::move(e));
  }

  {
    ProtocolEntry e;
    e.name = "reversibility";
    e.summary =
        "cycle the entangler forward and back and fit the per-cycle "
        "fidelity loss";
    e.schema = {preset_field("5-qubit"),
                num_field("t_ramp_ns", "240", 1, 1e7,
                          "stagger ramp duration", true),
                num_field("tau_fraction", "0.5", 0.01, 10,
                          "ramp time constant over duration", true),
                count_field("n_pairs_max", "4", 1, 64,
                            "deepest forward-reverse cycle count", true),
                count_field("shots", "400", 0, 1e6,
                            "sampled trajectories; 0 runs exact"),
                toggle_field("noise", "on", "decay and dephasing channels"),
                toggle_field("sample_readout", "on",
                             "Bernoulli readout sampling"),
                seed_field()};
    e.check = [](const ConfigPoint& p, std::vector<std::string>& problems) {
      if ((p.toggle("noise") || p.toggle("sample_readout")) &&
          p.num("shots") == 0)
        problems.push_back("noise or sample_readout needs shots > 0");
    };
    e.run = [](const ConfigPoint& p) {
      ReversibilityOptions opt;
      opt.device = device_for(p.text("preset"));
      opt.t_ramp = ns(p.num("t_ramp_ns"));
      opt.tau_fraction = p.num("tau_fraction");
      opt.n_pairs_max = static_cast<int>(p.num("n_pairs_max"));
      opt.shots = static_cast<int>(p.num("shots"));
      opt.with_noise = p.toggle("noise");
      opt.sample_readout = p.toggle("sample_readout");
      opt.seed = static_cast<std::uint64_t>(p.num("seed"));
      return run_reversibility(opt);
    };
    cat.push_back(std::move(e));
  }

  {
    ProtocolEntry e;
    e.name = "sensing";
    e.summary =
        "offset the clusters oppositely during the hold and read the "
        "detuning back from the fringe line";
    e.schema = {preset_field("7-qubit"),
                num_field("delta_mhz", "1", 0.01, 50,
                          "differential cluster detuning", true),
                num_field("t_ramp_ns", "240", 1, 1e7,
                          "stagger ramp duration", true),
                num_field("tau_fraction", "0.5", 0.01, 10,
                          "ramp time constant over duration", true),
                num_field("hold_max_ns", "400", 1, 1e6, "longest hold"),
                num_field("hold_step_ns", "1", 0.125, 1e4, "hold spacing"),
                count_field("shots", "0", 0, 1e6,
                            "sampled trajectories; 0 runs exact"),
                count_field("groups", "1", 1, 1e6,
                            "shot groups for jackknife errors"),
                toggle_field("noise", "off", "decay and dephasing channels"),
                toggle_field("sample_readout", "off",
                             "Bernoulli readout sampling"),
                seed_field()};
    e.check = [](const ConfigPoint& p, std::vector<std::string>& problems) {
      check_hold_grid(p, problems);
      check_groups(p, problems);
    };
    e.run = [](const ConfigPoint& p) {
      SensingOptions opt;
      opt.device = device_for(p.text("preset"));
      opt.delta = mhz(p.num("delta_mhz"));
      opt.t_ramp = ns(p.num("t_ramp_ns"));
      opt.tau_fraction = p.num("tau_fraction");
      opt.hold_max = ns(p.num("hold_max_ns"));
      opt.hold_step = ns(p.num("hold_step_ns"));
      opt.shots = static_cast<int>(p.num("shots"));
      opt.groups = static_cast<int>(p.num("groups"));
      opt.with_noise = p.toggle("noise");
      opt.sample_readout = p.toggle("sample_readout");
      opt.seed = static_cast<std::uint64_t>(p.num("seed"));
      return run_sensing(opt);
    };
    cat.push_back(std::move(e));
  }

  return cat;
}

}  // namespace detail

inline const std::vector<ProtocolEntry>& protocol_catalog() {
  static const std::vector<ProtocolEntry> cat = detail::build_catalog();
  return cat;
}

namespace detail {

inline int emit_error(const std::string& type,
                      const std::vector<std::string>& messages) {
  nlohmann::json rec;
  rec["error"]["type"] = type;
  rec["error"]["messages"] = messages;
  std::cerr << rec.dump() << '\n';
  if (type == "usage") return 2;
  if (type == "validation") return 3;
  return 1;
}

inline const char* kind_name(FieldKind k) {
  switch (k) {
    case FieldKind::number:
      return "number";
    case FieldKind::number_list:
      return "number-list";
    case FieldKind::text:
      return "text";
    case FieldKind::toggle:
      return "toggle";
  }
  return "number";
}

inline int list_protocols_cmd(bool json_out) {
  const auto& cat = protocol_catalog();
  if (json_out) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : cat) {
      nlohmann::json fields = nlohmann::json::array();
      for (const auto& f : e.schema)
        fields.push_back({{"key", f.key},
                          {"kind", kind_name(f.kind)},
                          {"default", f.fallback},
                          {"sweepable", f.sweepable},
                          {"help", f.help}});
      out.push_back(
          {{"name", e.name}, {"summary", e.summary}, {"fields", fields}});
    }
    std::cout << out.dump(2) << '\n';
    return 0;
  }
  for (const auto& e : cat) {
    std::cout << e.name << "\n    " << e.summary << "\n    fields:";
    for (const auto& f : e.schema) std::cout << ' ' << f.key << '=' << f.fallback;
    std::cout << "\n";
  }
  return 0;
}

struct RunArgs {
  std::string config_path;
  std::string protocol;
  std::string out_dir = ".";
  std::string seed;
  std::string shots;
  std::vector<std::string> sets;
  int jobs = 1;
  bool json_out = false;
};

inline void push_unique(std::vector<std::string>& list,
                        const std::string& msg) {
  for (const auto& m : list)
    if (m == msg) return;
  list.push_back(msg);
}

inline int run_command(const RunArgs& args) {
  std::vector<std::string> problems;
  ConfigDoc doc;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in)
      return emit_error("validation", {"config file '" + args.config_path +
                                       "' is not readable"});
    std::stringstream ss;
    ss << in.rdbuf();
    doc = parse_config_text(ss.str(), problems);
  }
  for (const auto& s : args.sets) apply_override(doc, s, problems);
  if (!args.seed.empty()) apply_override(doc, "seed=" + args.seed, problems);
  if (!args.shots.empty())
    apply_override(doc, "shots=" + args.shots, problems);

  std::string protocol = args.protocol;
  if (const ConfigEntry* e = doc.find("protocol")) {
    if (e->values.size() != 1)
      problems.push_back("field 'protocol': takes one value");
    else if (protocol.empty())
      protocol = e->values.front();
    doc.erase("protocol");
  }
  if (protocol.empty())
    return emit_error("usage", {"no protocol given; pass --protocol or set "
                                "protocol in the config"});
  const ProtocolEntry* entry = nullptr;
  std::string names;
  for (const auto& e : protocol_catalog()) {
    if (e.name == protocol) entry = &e;
    names += (names.empty() ? "" : ", ") + e.name;
  }
  if (!entry)
    return emit_error("usage", {"unknown protocol '" + protocol +
                                "'; expected one of " + names});

  auto schema_problems = validate_config(doc, entry->schema);
  problems.insert(problems.end(), schema_problems.begin(),
                  schema_problems.end());
  std::vector<ConfigPoint> points;
  if (problems.empty()) {
    points = expand_config(doc, entry->schema);
    if (points.size() > 4096) {
      problems.push_back("sweep expands to " +
                         std::to_string(points.size()) +
                         " points; the cap is 4096");
    } else if (entry->check) {
      std::vector<std::string> point_problems;
      for (const auto& p : points) entry->check(p, point_problems);
      for (const auto& m : point_problems) push_unique(problems, m);
    }
  }
  if (!problems.empty()) return emit_error("validation", problems);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ProtocolResult> results(points.size());
  std::vector<std::string> errors(points.size());
  const int workers =
      std::min<int>(args.jobs, static_cast<int>(points.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      try {
        results[i] = entry->run(points[i]);
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= points.size()) return;
        try {
          results[i] = entry->run(points[i]);
        } catch (const std::exception& ex) {
          errors[i] = ex.what();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      return emit_error("runtime", {"point " + std::to_string(i) + ": " +
                                    errors[i]});
  const double wall_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t0)
          .count();

  const std::vector<std::string> sweep = swept_keys(doc, entry->schema);
  const bool single = points.size() == 1;
  Table out_table;
  if (single) {
    out_table = results[0].results;
  } else {
    out_table.columns = sweep;
    std::vector<std::string> scalar_keys;
    for (const auto& [k, v] : results[0].scalars) {
      bool is_swept = false;
      for (const auto& s : sweep) is_swept = is_swept || s == k;
      if (!is_swept) scalar_keys.push_back(k);
    }
    out_table.columns.insert(out_table.columns.end(), scalar_keys.begin(),
                             scalar_keys.end());
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::vector<double> row;
      for (const auto& k : sweep) row.push_back(points[i].num(k));
      for (const auto& k : scalar_keys) {
        const auto it = results[i].scalars.find(k);
        row.push_back(it == results[i].scalars.end()
                          ? std::numeric_limits<double>::quiet_NaN()
                          : it->second);
      }
      out_table.rows.push_back(std::move(row));
    }
  }

  const std::filesystem::path dir(args.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    return emit_error("runtime",
                      {"cannot create '" + dir.string() + "': " + ec.message()});
  std::vector<std::string> outputs;
  write_csv_file(dir / "results.csv", out_table);
  outputs.push_back("results.csv");
  if (single && results[0].spectrum) {
    write_csv_file(dir / "spectrum.csv", spectrum_table(*results[0].spectrum));
    outputs.push_back("spectrum.csv");
  }
  if (single && results[0].fringes) {
    write_csv_file(dir / "fringes.csv", *results[0].fringes);
    outputs.push_back("fringes.csv");
  }

  nlohmann::json meta;
  meta["protocol"] = entry->name;
  meta["seed"] = static_cast<std::uint64_t>(points[0].num("seed"));
  meta["points"] = points.size();
  nlohmann::json cfg;
  for (const auto& f : entry->schema) {
    const ConfigEntry* e = doc.find(f.key);
    const auto values = e ? e->values : split_values(f.fallback);
    std::string joined;
    for (const auto& v : values) joined += (joined.empty() ? "" : ",") + v;
    cfg[f.key] = joined;
  }
  meta["config"] = cfg;
  meta["versions"] = {
      {"bht", kCliVersion},
      {"compiler", __VERSION__},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)}};
  meta["wall_time_ms"] = wall_ms;
  meta["outputs"] = outputs;
  if (single) meta["scalars"] = results[0].scalars;
  if (!sweep.empty()) meta["swept"] = sweep;
  write_json_file(dir / "meta.json", meta);
  outputs.push_back("meta.json");

  if (args.json_out) {
    std::cout << meta.dump(2) << '\n';
  } else {
    std::cout << entry->name << ": " << points.size() << " point"
              << (single ? "" : "s") << ", "
              << render_number(wall_ms / 1000.0) << " s\n";
    std::string listing;
    for (const auto& f : outputs) listing += (listing.empty() ? "" : " ") + f;
    std::cout << "wrote " << listing << " to " << dir.string() << "\n";
    if (single)
      for (const auto& [k, v] : results[0].scalars)
        std::cout << "  " << k << " = " << render_number(v) << "\n";
  }
  return 0;
}

}  // namespace detail

inline int cli_main(int argc, char** argv) {
  CLI::App app{"driven Bose-Hubbard lattice protocol runner"};
  app.require_subcommand(1);
  detail::RunArgs args;
  CLI::App* run = app.add_subcommand("run", "execute one protocol and write "
                                            "results");
  run->add_option("--config", args.config_path, "config file path");
  run->add_option("--protocol", args.protocol,
                  "protocol name; see list-protocols");
  run->add_option("--out", args.out_dir, "output directory")
      ->capture_default_str();
  run->add_option("--seed", args.seed, "override the seed field");
  run->add_option("--shots", args.shots, "override the shots field");
  run->add_option("--jobs", args.jobs, "worker threads over sweep points")
      ->check(CLI::Range(1, 256));
  run->add_option("--set", args.sets,
                  "field override as key=value; repeatable");
  run->add_flag("--json", args.json_out, "print the run record as JSON");
  bool list_json = false;
  CLI::App* list =
      app.add_subcommand("list-protocols", "print the protocol catalog");
  list->alias("list_protocols");
  list->add_flag("--json", list_json, "print the catalog as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return detail::emit_error("usage", {e.what()});
  }
  try {
    if (list->parsed()) return detail::list_protocols_cmd(list_json);
    return detail::run_command(args);
  } catch (const ValidationError& e) {
    return detail::emit_error("validation", {e.what()});
  } catch (const std::exception& e) {
    return detail::emit_error("runtime", {e.what()});
  }
}

}  // namespace bht
