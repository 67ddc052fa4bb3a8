#include "cbldm/pipeline/profile.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cbldm {

CvaeConfig Profile::cvae_config() const {
  CvaeConfig c;
  c.in_ch = cond_ch;
  c.in_len = cond_len;
  c.lat_ch = cvae_lat_ch;
  c.lat_len = cvae_lat_len;
  c.w1 = cvae_w1;
  c.w2 = cvae_w2;
  c.w3 = cvae_w3;
  c.beta_kl = float(cvae_beta_kl);
  return c;
}

XvaeConfig Profile::xvae_config() const {
  XvaeConfig c;
  c.in_ch = 4;
  c.in_hw = block_hw();
  c.lat_ch = xvae_lat_ch;
  c.lat_hw = xvae_lat_hw;
  c.cond_dim = cond_dim();
  c.enc_widths = xvae_enc_widths;
  c.dec_widths = xvae_dec_widths;
  c.prior_hidden = xvae_prior_hidden;
  c.beta_kl = float(xvae_beta_kl);
  return c;
}

DenoiserConfig Profile::ddm_config() const {
  DenoiserConfig c;
  c.lat_ch = xvae_lat_ch;
  c.lat_hw = xvae_lat_hw;
  c.cond_dim = cond_dim();
  c.width = ddm_width;
  c.t_emb_dim = ddm_t_emb;
  c.n_res = ddm_n_res;
  return c;
}

NoiseSchedule Profile::schedule() const {
  return make_schedule(t_steps, beta_start, beta_end);
}

void validate_profile(const Profile& p) {
  require(p.n_max >= 4 && p.n_max % 2 == 0,
          strfmt("profile %s: n_max must be even and >= 4", p.name.c_str()));
  require(p.sigma > 0, "profile: sigma must be positive");
  require(p.norm_constant > 0, "profile: norm_constant must be positive");
  validate_params(p.debye);
  require(p.cond_ch >= 1 && p.cond_len >= 1, "profile: bad condition shape");
  int grid = grid_length(p.debye);
  require(grid == p.cond_ch * p.cond_len,
          strfmt("profile %s: r grid has %d points but the condition image "
                 "holds %d x %d",
                 p.name.c_str(), grid, p.cond_ch, p.cond_len));
  require(p.cond_len == 4 * p.cvae_lat_len,
          strfmt("profile %s: cond_len must be 4 * cvae_lat_len", p.name.c_str()));
  require(p.cvae_lat_ch >= 1, "profile: bad cvae latent channels");
  require(p.cvae_w1 >= 1 && p.cvae_w2 >= 1 && p.cvae_w3 >= 1,
          "profile: cvae widths must be positive");

  int hw = p.block_hw();
  require(p.xvae_lat_hw >= 1 && hw % p.xvae_lat_hw == 0,
          "profile: xvae latent side must divide n_max / 2");
  int ratio = hw / p.xvae_lat_hw;
  require(ratio >= 2 && (ratio & (ratio - 1)) == 0,
          strfmt("profile %s: (n_max/2) / xvae_lat_hw must be a power of two "
                 ">= 2, got %d",
                 p.name.c_str(), ratio));
  int n_down = 0;
  for (int r = ratio; r > 1; r /= 2) ++n_down;
  require(int(p.xvae_enc_widths.size()) == n_down,
          strfmt("profile %s: xvae_enc_widths needs %d entries", p.name.c_str(),
                 n_down));
  require(int(p.xvae_dec_widths.size()) == n_down,
          strfmt("profile %s: xvae_dec_widths needs %d entries", p.name.c_str(),
                 n_down));
  for (int w : p.xvae_enc_widths) require(w >= 1, "profile: bad encoder width");
  for (int w : p.xvae_dec_widths) require(w >= 1, "profile: bad decoder width");
  require(p.xvae_prior_hidden >= 1, "profile: bad prior width");

  require(p.ddm_width >= 1 && p.ddm_n_res >= 0, "profile: bad denoiser shape");
  require(p.ddm_t_emb >= 2 && p.ddm_t_emb % 2 == 0,
          "profile: ddm_t_emb must be even and >= 2");

  make_schedule(p.t_steps, p.beta_start, p.beta_end);  // validates all three

  require(p.cvae_beta_kl >= 0 && p.xvae_beta_kl >= 0,
          "profile: beta_kl must be nonnegative");
  require(p.cvae_steps >= 0 && p.xvae_steps >= 0 && p.ddm_steps >= 0,
          "profile: training budgets must be nonnegative");
  require(p.cvae_lr > 0 && p.xvae_lr > 0 && p.ddm_lr > 0,
          "profile: learning rates must be positive");
  require(p.lr_half_life >= 0 && p.kl_warmup >= 0,
          "profile: schedule knobs must be nonnegative");
  require(p.split > 0 && p.split <= 1, "profile: split must lie in (0, 1]");
}

uint64_t profile_hash(const Profile& p) {
  // Canonical text over the fields that fix tensor shapes and the noise
  // schedule. Budgets, rates, and the name stay out on purpose.
  std::ostringstream s;
  auto d = [&](double v) { s << strfmt("%.17g;", v); };
  s << "n_max=" << p.n_max << ";";
  d(p.sigma);
  d(p.norm_constant);
  d(p.debye.r_min);
  d(p.debye.r_max);
  d(p.debye.r_step);
  d(p.debye.q_min);
  d(p.debye.q_max);
  d(p.debye.q_damp);
  d(p.debye.b_iso);
  s << "cond=" << p.cond_ch << "x" << p.cond_len << ";";
  s << "clat=" << p.cvae_lat_ch << "x" << p.cvae_lat_len << ";";
  s << "cw=" << p.cvae_w1 << "," << p.cvae_w2 << "," << p.cvae_w3 << ";";
  s << "xlat=" << p.xvae_lat_ch << "x" << p.xvae_lat_hw << ";";
  s << "xe=";
  for (int w : p.xvae_enc_widths) s << w << ",";
  s << "xd=";
  for (int w : p.xvae_dec_widths) s << w << ",";
  s << "prior=" << p.xvae_prior_hidden << ";";
  s << "ddm=" << p.ddm_width << "," << p.ddm_t_emb << "," << p.ddm_n_res << ";";
  s << "T=" << p.t_steps << ";";
  d(p.beta_start);
  d(p.beta_end);
  return fnv1a(s.str());
}

Profile builtin_profile(const std::string& name) {
  Profile p;
  if (name == "desk") {
    p.name = "desk";
    p.debye.r_step = 0.05;
    return p;
  }
  if (name == "paper") {
    p.name = "paper";
    p.n_max = 256;
    p.norm_constant = 64.0;
    p.debye.r_step = 0.01;
    p.cond_len = 500;
    p.cvae_lat_len = 125;
    p.cvae_w1 = 32;
    p.cvae_w2 = 64;
    p.cvae_w3 = 64;
    p.xvae_lat_hw = 16;
    p.xvae_enc_widths = {16, 32, 64};
    p.xvae_dec_widths = {64, 32, 16};
    p.ddm_width = 48;
    p.ddm_n_res = 3;
    p.t_steps = 1000;
    p.cvae_steps = 200000;
    p.xvae_steps = 200000;
    p.ddm_steps = 400000;
    p.cvae_lr = 1e-3;
    p.xvae_lr = 1e-3;
    p.ddm_lr = 1e-3;
    p.lr_half_life = 100000;
    p.kl_warmup = 5000;
    return p;
  }
  fail(strfmt("unknown builtin profile '%s' (have: desk, paper)", name.c_str()));
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& v, int lineno) {
  size_t idx = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &idx);
  } catch (const std::exception&) {
    fail(strfmt("config line %d: expected an integer, got '%s'", lineno, v.c_str()));
  }
  require(idx == v.size(),
          strfmt("config line %d: trailing junk after integer '%s'", lineno, v.c_str()));
  return out;
}

double parse_double(const std::string& v, int lineno) {
  size_t idx = 0;
  double out = 0;
  try {
    out = std::stod(v, &idx);
  } catch (const std::exception&) {
    fail(strfmt("config line %d: expected a number, got '%s'", lineno, v.c_str()));
  }
  require(idx == v.size(),
          strfmt("config line %d: trailing junk after number '%s'", lineno, v.c_str()));
  return out;
}

std::vector<int> parse_int_list(const std::string& v, int lineno) {
  std::vector<int> out;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ','))
    out.push_back(int(parse_int(trim(cur), lineno)));
  require(!out.empty(), strfmt("config line %d: empty list", lineno));
  return out;
}

void apply_key(Profile& p, const std::string& key, const std::string& val,
               int lineno) {
  auto I = [&] { return int(parse_int(val, lineno)); };
  auto D = [&] { return parse_double(val, lineno); };
  if (key == "n_max") p.n_max = I();
  else if (key == "sigma") p.sigma = D();
  else if (key == "norm_constant") p.norm_constant = D();
  else if (key == "r_min") p.debye.r_min = D();
  else if (key == "r_max") p.debye.r_max = D();
  else if (key == "r_step") p.debye.r_step = D();
  else if (key == "q_min") p.debye.q_min = D();
  else if (key == "q_max") p.debye.q_max = D();
  else if (key == "q_damp") p.debye.q_damp = D();
  else if (key == "b_iso") p.debye.b_iso = D();
  else if (key == "cond_ch") p.cond_ch = I();
  else if (key == "cond_len") p.cond_len = I();
  else if (key == "cvae_lat_ch") p.cvae_lat_ch = I();
  else if (key == "cvae_lat_len") p.cvae_lat_len = I();
  else if (key == "cvae_w1") p.cvae_w1 = I();
  else if (key == "cvae_w2") p.cvae_w2 = I();
  else if (key == "cvae_w3") p.cvae_w3 = I();
  else if (key == "cvae_beta_kl") p.cvae_beta_kl = D();
  else if (key == "xvae_lat_ch") p.xvae_lat_ch = I();
  else if (key == "xvae_lat_hw") p.xvae_lat_hw = I();
  else if (key == "xvae_enc_widths") p.xvae_enc_widths = parse_int_list(val, lineno);
  else if (key == "xvae_dec_widths") p.xvae_dec_widths = parse_int_list(val, lineno);
  else if (key == "xvae_prior_hidden") p.xvae_prior_hidden = I();
  else if (key == "xvae_beta_kl") p.xvae_beta_kl = D();
  else if (key == "ddm_width") p.ddm_width = I();
  else if (key == "ddm_t_emb") p.ddm_t_emb = I();
  else if (key == "ddm_n_res") p.ddm_n_res = I();
  else if (key == "t_steps") p.t_steps = I();
  else if (key == "beta_start") p.beta_start = D();
  else if (key == "beta_end") p.beta_end = D();
  else if (key == "cvae_steps") p.cvae_steps = I();
  else if (key == "xvae_steps") p.xvae_steps = I();
  else if (key == "ddm_steps") p.ddm_steps = I();
  else if (key == "cvae_lr") p.cvae_lr = D();
  else if (key == "xvae_lr") p.xvae_lr = D();
  else if (key == "ddm_lr") p.ddm_lr = D();
  else if (key == "lr_half_life") p.lr_half_life = I();
  else if (key == "kl_warmup") p.kl_warmup = I();
  else if (key == "split") p.split = D();
  else if (key == "split_seed") p.split_seed = uint64_t(parse_int(val, lineno));
  else fail(strfmt("config line %d: unknown key '%s'", lineno, key.c_str()));
}

}  // namespace

std::map<std::string, Profile> load_profiles(const std::string& config_path) {
  std::map<std::string, Profile> out;
  out["desk"] = builtin_profile("desk");
  out["paper"] = builtin_profile("paper");
  if (config_path.empty()) return out;

  std::ifstream f(config_path);
  require(f.good(), "cannot open config file: " + config_path);
  std::string line;
  int lineno = 0;
  Profile* cur = nullptr;
  while (std::getline(f, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      require(t.back() == ']', strfmt("config line %d: unterminated section", lineno));
      std::string inner = trim(t.substr(1, t.size() - 2));
      require(inner.rfind("profile.", 0) == 0,
              strfmt("config line %d: sections must be [profile.<name>]", lineno));
      std::string name = inner.substr(8);
      require(!name.empty(), strfmt("config line %d: empty profile name", lineno));
      auto it = out.find(name);
      if (it == out.end()) {
        Profile base = builtin_profile("desk");
        base.name = name;
        it = out.emplace(name, base).first;
      }
      cur = &it->second;
      continue;
    }
    size_t eq = t.find('=');
    require(eq != std::string::npos,
            strfmt("config line %d: expected key = value", lineno));
    require(cur != nullptr,
            strfmt("config line %d: key outside a [profile.*] section", lineno));
    apply_key(*cur, trim(t.substr(0, eq)), trim(t.substr(eq + 1)), lineno);
  }
  return out;
}

Profile resolve_profile(const std::string& name, const std::string& config_path) {
  auto all = load_profiles(config_path);
  auto it = all.find(name);
  if (it == all.end()) {
    std::string have;
    for (const auto& kv : all) have += (have.empty() ? "" : ", ") + kv.first;
    fail(strfmt("unknown profile '%s' (have: %s)", name.c_str(), have.c_str()));
  }
  validate_profile(it->second);
  return it->second;
}

}  // namespace cbldm
