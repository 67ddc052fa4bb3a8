#include "cbldm/structgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace cbldm {

namespace {

constexpr double kPi = 3.14159265358979323846;

double dist2(const Vec3& a, const Vec3& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

void append_unique(std::vector<Vec3>& pts, std::set<std::array<long long, 3>>& seen,
                   const Vec3& p) {
  std::array<long long, 3> key{llround(p[0] * 1e6), llround(p[1] * 1e6),
                               llround(p[2] * 1e6)};
  if (seen.insert(key).second) pts.push_back(p);
}

/// Carve every lattice point within a sphere of radius cutoff around the
/// origin. Cell vectors and basis are in Å.
std::vector<Vec3> carve_lattice(const std::array<Vec3, 3>& cell,
                                const std::vector<Vec3>& basis, double cutoff) {
  double min_len = 1e300;
  for (const Vec3& v : cell) min_len = std::min(min_len, std::sqrt(dist2(v, {0, 0, 0})));
  int C = int(std::ceil(cutoff / min_len)) + 2;
  std::vector<Vec3> pts;
  std::set<std::array<long long, 3>> seen;
  double cut2 = cutoff * cutoff;
  for (int i = -C; i <= C; ++i)
    for (int j = -C; j <= C; ++j)
      for (int k = -C; k <= C; ++k)
        for (const Vec3& b : basis) {
          Vec3 p{i * cell[0][0] + j * cell[1][0] + k * cell[2][0] + b[0],
                 i * cell[0][1] + j * cell[1][1] + k * cell[2][1] + b[1],
                 i * cell[0][2] + j * cell[1][2] + k * cell[2][2] + b[2]};
          if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= cut2 + 1e-9)
            append_unique(pts, seen, p);
        }
  return pts;
}

std::vector<Vec3> build_cubic(StructKind kind, double a, double cutoff) {
  std::array<Vec3, 3> cell{Vec3{a, 0, 0}, Vec3{0, a, 0}, Vec3{0, 0, a}};
  std::vector<Vec3> basis;
  switch (kind) {
    case StructKind::SC:
      basis = {{0, 0, 0}};
      break;
    case StructKind::BCC:
      basis = {{0, 0, 0}, {a / 2, a / 2, a / 2}};
      break;
    case StructKind::FCC:
      basis = {{0, 0, 0}, {0, a / 2, a / 2}, {a / 2, 0, a / 2}, {a / 2, a / 2, 0}};
      break;
    default:
      fail("build_cubic: not a cubic kind");
  }
  return carve_lattice(cell, basis, cutoff);
}

std::vector<Vec3> build_hcp(double a, double cutoff) {
  double c = std::sqrt(8.0 / 3.0) * a;  // ideal axial ratio
  std::array<Vec3, 3> cell{Vec3{a, 0, 0}, Vec3{-a / 2, a * std::sqrt(3.0) / 2, 0},
                           Vec3{0, 0, c}};
  Vec3 b2{2.0 / 3.0 * cell[0][0] + 1.0 / 3.0 * cell[1][0],
          2.0 / 3.0 * cell[0][1] + 1.0 / 3.0 * cell[1][1], c / 2};
  return carve_lattice(cell, {{0, 0, 0}, b2}, cutoff);
}

/// Mackay icosahedron of k shells: barycentric grids on the 20 faces of an
/// icosahedron, shell s scaled by s. Tangential spacing set to a/sqrt(2).
std::vector<Vec3> build_ico(int shells, double a) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts;
  for (double s1 : {-1.0, 1.0})
    for (double s2 : {-1.0, 1.0}) {
      verts.push_back({0, s1, s2 * phi});
      verts.push_back({s1, s2 * phi, 0});
      verts.push_back({s2 * phi, 0, s1});
    }
  // edges of this normalization have length 2
  auto adjacent = [&](int i, int j) { return std::abs(dist2(verts[size_t(i)], verts[size_t(j)]) - 4.0) < 1e-9; };
  std::vector<std::array<int, 3>> faces;
  for (int i = 0; i < 12; ++i)
    for (int j = i + 1; j < 12; ++j)
      for (int k = j + 1; k < 12; ++k)
        if (adjacent(i, j) && adjacent(j, k) && adjacent(i, k))
          faces.push_back({i, j, k});
  require(faces.size() == 20, "ico: face search failed");

  double scale = (a / std::sqrt(2.0)) / 2.0;
  std::vector<Vec3> pts;
  std::set<std::array<long long, 3>> seen;
  append_unique(pts, seen, {0, 0, 0});
  for (int s = 1; s <= shells; ++s)
    for (const auto& f : faces) {
      const Vec3 &A = verts[size_t(f[0])], &B = verts[size_t(f[1])], &C = verts[size_t(f[2])];
      for (int i = 0; i <= s; ++i)
        for (int j = 0; i + j <= s; ++j) {
          int l = s - i - j;
          Vec3 p{scale * (i * A[0] + j * B[0] + l * C[0]),
                 scale * (i * A[1] + j * B[1] + l * C[1]),
                 scale * (i * A[2] + j * B[2] + l * C[2])};
          append_unique(pts, seen, p);
        }
    }
  return pts;
}

/// Pentagonal decahedron built from five lattice sectors around the z axis.
/// p controls the pyramid shells, q elongates the waist by inserted layer
/// pairs, r shaves the columns under the pentagon vertices. All nearest
/// neighbors sit at d = a/sqrt(2).
std::vector<Vec3> build_dec(int p, int q, int r, double a) {
  require(p >= 1, "dec: p must be >= 1");
  require(q >= 1, "dec: q must be >= 1");
  require(r >= 0 && r < p, "dec: r must be in [0, p)");
  double d = a / std::sqrt(2.0);
  double R = d / (2.0 * std::sin(kPi / 5.0));
  double zeta = std::sqrt(d * d - R * R);  // layer spacing keeping apex bonds = d

  std::vector<Vec3> pts;
  std::set<std::array<long long, 3>> seen;
  int L = p + 2 * (q - 1);
  for (int l = -L; l <= L; ++l) {
    int core = std::max(0, std::abs(l) - 2 * (q - 1));
    int smax = p - core;
    if (smax < 0) continue;
    for (int k = 0; k < 5; ++k) {
      double ax = std::cos(2.0 * kPi * k / 5.0), ay = std::sin(2.0 * kPi * k / 5.0);
      double bx = std::cos(2.0 * kPi * (k + 1) / 5.0),
             by = std::sin(2.0 * kPi * (k + 1) / 5.0);
      for (int m = 0; m <= smax; ++m)
        for (int n = 0; m + n <= smax; ++n) {
          if ((p + l + m + n) % 2 != 0) continue;
          if (std::abs(m - n) > p - r) continue;
          append_unique(pts, seen,
                        {R * (m * ax + n * bx), R * (m * ay + n * by), l * zeta});
        }
    }
  }
  return pts;
}

/// fcc octahedron with m atoms per edge; even sizes center on an
/// octahedral hole so the layer count works out.
std::vector<Vec3> build_oct(int m, double a) {
  require(m >= 1, "oct: m must be >= 1");
  int cu = (m % 2 == 0) ? 1 : 0;  // hole-centered shift for even m
  std::vector<Vec3> pts;
  int E = m + 1;
  for (int u = -E; u <= E; ++u)
    for (int v = -E; v <= E; ++v)
      for (int w = -E; w <= E; ++w) {
        if (((u + v + w) % 2 + 2) % 2 != 0) continue;  // fcc parity
        if (std::abs(u - cu) + std::abs(v) + std::abs(w) > m - 1) continue;
        pts.push_back({u * a / 2, v * a / 2, w * a / 2});
      }
  return pts;
}

void center_cloud(std::vector<Vec3>& pts) {
  Vec3 c{0, 0, 0};
  for (const Vec3& p : pts)
    for (int k = 0; k < 3; ++k) c[k] += p[k];
  for (int k = 0; k < 3; ++k) c[k] /= double(pts.size());
  for (Vec3& p : pts)
    for (int k = 0; k < 3; ++k) p[k] -= c[k];
}

int kind_index(StructKind k) {
  const auto& ks = all_kinds();
  for (size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return int(i);
  fail("kind_index: not a generable kind");
}

std::string lower(std::string s) {
  for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

const std::array<StructKind, 7>& all_kinds() {
  static const std::array<StructKind, 7> ks{
      StructKind::FCC, StructKind::BCC, StructKind::SC,  StructKind::HCP,
      StructKind::ICO, StructKind::DEC, StructKind::OCT};
  return ks;
}

std::string kind_name(StructKind k) {
  switch (k) {
    case StructKind::FCC: return "FCC";
    case StructKind::BCC: return "BCC";
    case StructKind::SC: return "SC";
    case StructKind::HCP: return "HCP";
    case StructKind::ICO: return "ICO";
    case StructKind::DEC: return "DEC";
    case StructKind::OCT: return "OCT";
    case StructKind::NA: return "NA";
  }
  fail("kind_name: bad enum");
}

StructKind kind_from_name(const std::string& name) {
  std::string u = name;
  for (char& c : u) c = char(std::toupper(static_cast<unsigned char>(c)));
  for (StructKind k : all_kinds())
    if (kind_name(k) == u) return k;
  if (u == "NA") return StructKind::NA;
  fail("unknown structure kind: " + name);
}

AtomCloud generate_cluster(StructKind kind, const SizeParams& sp,
                           double lattice_constant, int min_atoms, int max_atoms) {
  require(lattice_constant > 0, "generate_cluster: lattice constant must be positive");
  double a = lattice_constant;
  std::vector<Vec3> pts;
  switch (kind) {
    case StructKind::FCC:
    case StructKind::BCC:
    case StructKind::SC:
      require(sp.cutoff > 0, "generate_cluster: cutoff must be positive");
      pts = build_cubic(kind, a, sp.cutoff);
      break;
    case StructKind::HCP:
      require(sp.cutoff > 0, "generate_cluster: cutoff must be positive");
      pts = build_hcp(a, sp.cutoff);
      break;
    case StructKind::ICO:
      require(sp.shells >= 1, "generate_cluster: shells must be >= 1");
      pts = build_ico(sp.shells, a);
      break;
    case StructKind::DEC:
      pts = build_dec(sp.p, sp.q, sp.r, a);
      break;
    case StructKind::OCT:
      pts = build_oct(sp.m, a);
      break;
    case StructKind::NA:
      fail("generate_cluster: kind NA is not generable");
  }

  int n = int(pts.size());
  if (n < min_atoms || n > max_atoms)
    throw ClusterRejected(strfmt("cluster has %d atoms, outside [%d, %d]", n,
                                 min_atoms, max_atoms),
                          n);
  center_cloud(pts);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      require(dist2(pts[size_t(i)], pts[size_t(j)]) > 0.25,
              "generate_cluster: atoms closer than 0.5 A");

  AtomCloud cloud;
  cloud.coords = std::move(pts);
  cloud.kind = kind;
  cloud.lattice_constant = a;
  return cloud;
}

std::vector<double> pair_distances(const AtomCloud& cloud) {
  int n = cloud.size();
  std::vector<double> out;
  out.reserve(size_t(n) * size_t(n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      out.push_back(std::sqrt(dist2(cloud.coords[size_t(i)], cloud.coords[size_t(j)])));
  return out;
}

void write_xyz(const std::string& path, const AtomCloud& cloud) {
  std::ofstream f(path);
  require(f.good(), "write_xyz: cannot open " + path);
  f << cloud.size() << "\n";
  f << "kind=" << kind_name(cloud.kind) << " a=" << strfmt("%.6f", cloud.lattice_constant)
    << "\n";
  for (const Vec3& p : cloud.coords)
    f << strfmt("Au %.6f %.6f %.6f", p[0], p[1], p[2]) << "\n";
  require(f.good(), "write_xyz: write failed for " + path);
}

AtomCloud read_xyz(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "read_xyz: cannot open " + path);
  std::string line;
  require(bool(std::getline(f, line)), "read_xyz: missing atom count");
  int n = 0;
  require(sscanf(line.c_str(), "%d", &n) == 1 && n >= 1, "read_xyz: bad atom count");
  require(bool(std::getline(f, line)), "read_xyz: missing comment line");

  AtomCloud cloud;
  std::istringstream cs(line);
  std::string tok;
  while (cs >> tok) {
    if (tok.rfind("kind=", 0) == 0) cloud.kind = kind_from_name(tok.substr(5));
    if (tok.rfind("a=", 0) == 0) cloud.lattice_constant = std::stod(tok.substr(2));
  }
  for (int i = 0; i < n; ++i) {
    require(bool(std::getline(f, line)), "read_xyz: truncated atom list");
    std::istringstream as(line);
    std::string el;
    Vec3 p;
    require(bool(as >> el >> p[0] >> p[1] >> p[2]), "read_xyz: bad atom line");
    cloud.coords.push_back(p);
  }
  return cloud;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  require(f.good(), "write_manifest: cannot open " + path);
  for (const ManifestEntry& e : entries)
    f << e.path << "\t" << kind_name(e.kind) << "\t" << e.natoms << "\t" << e.split
      << "\n";
  require(f.good(), "write_manifest: write failed");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "read_manifest: cannot open " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string kind;
    require(bool(ls >> e.path >> kind >> e.natoms >> e.split),
            "read_manifest: bad line: " + line);
    e.kind = kind_from_name(kind);
    out.push_back(e);
  }
  return out;
}

std::vector<ManifestEntry> generate_dataset(const DatasetSpec& spec,
                                            const std::string& out_dir) {
  require(!spec.counts.empty(), "dataset: no structure counts requested");
  require(spec.split > 0.0 && spec.split < 1.0, "dataset: split must be in (0,1)");
  int total_requested = 0;
  for (const auto& [kind, cnt] : spec.counts) {
    require(cnt > 0, "dataset: nonpositive count for " + kind_name(kind));
    total_requested += cnt;
  }

  RngStream root(spec.seed);
  std::set<std::pair<int, std::vector<long long>>> seen;
  std::vector<AtomCloud> clouds;
  std::vector<std::string> names;
  std::vector<StructKind> kinds;

  for (const auto& [kind, cnt] : spec.counts) {
    KindRange rg;
    if (auto it = spec.ranges.find(kind); it != spec.ranges.end()) rg = it->second;
    RngStream rng = root.fork(uint64_t(kind_index(kind)));
    int made = 0;
    long attempts = 0;
    while (made < cnt) {
      require(attempts < long(spec.max_retries) * cnt,
              "dataset: retry budget exhausted for " + kind_name(kind) +
                  " (ranges too narrow or duplicates exhausted)");
      ++attempts;
      double a = rg.a_lo + (rg.a_hi - rg.a_lo) * rng.uniform();
      SizeParams sp;
      auto randint = [&](int lo, int hi) {
        return lo + int(rng.uniform_int(uint64_t(hi - lo + 1)));
      };
      switch (kind) {
        case StructKind::FCC:
        case StructKind::BCC:
        case StructKind::SC:
        case StructKind::HCP:
          sp.cutoff = rg.cut_lo + (rg.cut_hi - rg.cut_lo) * rng.uniform();
          break;
        case StructKind::ICO:
          sp.shells = randint(rg.s_lo, rg.s_hi);
          break;
        case StructKind::DEC:
          sp.p = randint(rg.s_lo, rg.s_hi);
          sp.q = randint(rg.q_lo, rg.q_hi);
          sp.r = randint(rg.r_lo, std::min(rg.r_hi, sp.p - 1));
          break;
        case StructKind::OCT:
          sp.m = randint(rg.s_lo, rg.s_hi);
          break;
        case StructKind::NA:
          fail("dataset: kind NA");
      }
      AtomCloud cloud;
      try {
        cloud = generate_cluster(kind, sp, a, spec.min_atoms, spec.max_atoms);
      } catch (const ClusterRejected&) {
        continue;
      }
      // isometric duplicates collapse to one entry
      std::vector<double> dists = pair_distances(cloud);
      std::sort(dists.begin(), dists.end());
      std::vector<long long> key(dists.size());
      for (size_t i = 0; i < dists.size(); ++i) key[i] = llround(dists[i] * 1e4);
      if (!seen.insert({kind_index(kind), std::move(key)}).second) continue;

      names.push_back(strfmt("%s_%03d.xyz", lower(kind_name(kind)).c_str(), made));
      clouds.push_back(std::move(cloud));
      kinds.push_back(kind);
      ++made;
    }
  }

  int total = int(clouds.size());
  std::vector<int> order(static_cast<size_t>(total));
  for (int i = 0; i < total; ++i) order[size_t(i)] = i;
  RngStream shuffle_rng = root.fork(999);
  for (int i = total - 1; i > 0; --i)
    std::swap(order[size_t(i)], order[shuffle_rng.uniform_int(uint64_t(i + 1))]);
  int n_train = int(llround(total * spec.split));
  std::vector<std::string> split(size_t(total), "val");
  for (int i = 0; i < n_train; ++i) split[size_t(order[size_t(i)])] = "train";

  std::filesystem::create_directories(out_dir);
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < total; ++i) {
    write_xyz(out_dir + "/" + names[size_t(i)], clouds[size_t(i)]);
    entries.push_back(ManifestEntry{names[size_t(i)], kinds[size_t(i)],
                                    clouds[size_t(i)].size(), split[size_t(i)]});
  }
  write_manifest(out_dir + "/manifest.tsv", entries);
  return entries;
}

namespace {

std::pair<double, double> parse_range(const std::string& v, const std::string& key) {
  size_t colon = v.find(':');
  require(colon != std::string::npos, "dataset spec: range value for " + key +
                                          " must be lo:hi");
  try {
    return {std::stod(v.substr(0, colon)), std::stod(v.substr(colon + 1))};
  } catch (const std::exception&) {
    fail("dataset spec: bad numbers in " + key);
  }
}

}  // namespace

DatasetSpec parse_dataset_spec(const std::string& text) {
  DatasetSpec spec;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (size_t h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    size_t eq = line.find('=');
    require(eq != std::string::npos,
            strfmt("dataset spec line %d: expected key=value", lineno));
    std::string key = lower(line.substr(0, eq));
    std::string val = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    while (!val.empty() && (val.front() == ' ' || val.front() == '\t')) val.erase(0, 1);

    try {
      if (key == "seed") {
        spec.seed = std::stoull(val);
      } else if (key == "split") {
        spec.split = std::stod(val);
      } else if (key == "min_atoms") {
        spec.min_atoms = std::stoi(val);
      } else if (key == "max_atoms") {
        spec.max_atoms = std::stoi(val);
      } else if (key == "max_retries") {
        spec.max_retries = std::stoi(val);
      } else if (key.rfind("count.", 0) == 0) {
        StructKind k = kind_from_name(key.substr(6));
        spec.counts.push_back({k, std::stoi(val)});
      } else if (key.rfind("range.", 0) == 0) {
        std::string rest = key.substr(6);
        size_t dot = rest.find('.');
        require(dot != std::string::npos, "dataset spec: expected range.<kind>.<field>");
        StructKind k = kind_from_name(rest.substr(0, dot));
        std::string field = rest.substr(dot + 1);
        KindRange& rg = spec.ranges[k];  // default-constructed on first touch
        auto [lo, hi] = parse_range(val, key);
        if (field == "cut") {
          rg.cut_lo = lo;
          rg.cut_hi = hi;
        } else if (field == "a") {
          rg.a_lo = lo;
          rg.a_hi = hi;
        } else if (field == "shells" || field == "p" || field == "m") {
          rg.s_lo = int(lo);
          rg.s_hi = int(hi);
        } else if (field == "q") {
          rg.q_lo = int(lo);
          rg.q_hi = int(hi);
        } else if (field == "r") {
          rg.r_lo = int(lo);
          rg.r_hi = int(hi);
        } else {
          fail("dataset spec: unknown range field " + field);
        }
      } else {
        fail("dataset spec: unknown key " + key);
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail(strfmt("dataset spec line %d: bad value", lineno));
    }
  }
  return spec;
}

DatasetSpec load_dataset_spec(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "dataset spec: cannot open " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_dataset_spec(buf.str());
}

}  // namespace cbldm
