#include "cmnet/config.hpp"

#include <fstream>
#include <sstream>

#include "cmnet/errors.hpp"

namespace cmnet {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::defaults() {
  Config c;
  // run
  c.set("seed", "42");
  c.set("precision", "single");
  c.set("threads", "1");
  // model
  c.set("encoder.reduction", "8");
  c.set("encoder.channels", "64");
  c.set("hidden.channels", "64");
  c.set("flow.provider", "oracle");
  c.set("ablation", "motion");
  // synthetic data
  c.set("data.width", "64");
  c.set("data.height", "64");
  c.set("data.frames", "3");
  c.set("data.count", "20");
  c.set("data.sprites", "2");
  c.set("data.occlusion", "1");
  c.set("data.max_translation", "4");
  c.set("data.sprite_contrast", "0.5");
  // augmentation
  c.set("aug.crop", "64");
  c.set("aug.flip", "1");
  c.set("aug.brightness_lo", "1.0");
  c.set("aug.brightness_hi", "1.0");
  c.set("aug.contrast_lo", "1.0");
  c.set("aug.contrast_hi", "1.0");
  c.set("aug.hue_lo", "1.0");
  c.set("aug.hue_hi", "1.0");
  c.set("aug.saturation_lo", "1.0");
  c.set("aug.saturation_hi", "1.0");
  c.set("aug.gamma_lo", "1.0");
  c.set("aug.gamma_hi", "1.0");
  c.set("aug.noise_sigma", "0.0");
  // training
  c.set("train.iters", "2000");
  c.set("train.batch", "1");
  c.set("train.phase_split", "0.5");
  c.set("train.ckpt_every", "500");
  c.set("train.log_every", "1");
  c.set("train.frames", "3");
  c.set("loss.lap_levels", "5");
  c.set("loss.fg_weight", "0.1");
  // optimizer / schedule
  c.set("optim.lr", "1e-4");
  c.set("optim.beta1", "0.9");
  c.set("optim.beta2", "0.999");
  c.set("optim.eps", "1e-8");
  c.set("optim.weight_decay", "1e-2");
  c.set("sched.pct_start", "0.3");
  c.set("sched.div_factor", "25");
  c.set("sched.final_div_factor", "1e4");
  // metric constants
  c.set("metrics.grad_sigma", "1.4");
  c.set("metrics.conn_step", "0.1");
  c.set("metrics.conn_tolerance", "0.15");
  return c;
}

void Config::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected key=value");
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void Config::set_kv(const std::string& key_eq_value) {
  const size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos) throw UsageError("override must be key=value: " + key_eq_value);
  set(trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

std::string Config::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("missing config key: " + key);
  return it->second;
}

int64_t Config::integer(const std::string& key) const {
  try {
    return std::stoll(str(key));
  } catch (const std::logic_error&) {
    throw UsageError("config key " + key + " is not an integer: " + str(key));
  }
}

uint64_t Config::u64(const std::string& key) const {
  try {
    return std::stoull(str(key));
  } catch (const std::logic_error&) {
    throw UsageError("config key " + key + " is not a u64: " + str(key));
  }
}

double Config::real(const std::string& key) const {
  try {
    return std::stod(str(key));
  } catch (const std::logic_error&) {
    throw UsageError("config key " + key + " is not a number: " + str(key));
  }
}

bool Config::boolean(const std::string& key) const {
  const std::string v = str(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw UsageError("config key " + key + " is not a boolean: " + v);
}

std::string Config::echo() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
  return os.str();
}

}  // namespace cmnet
