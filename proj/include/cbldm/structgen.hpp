#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "cbldm/common.hpp"
#include "cbldm/rng.hpp"

namespace cbldm {

using Vec3 = std::array<double, 3>;

enum class StructKind { FCC, BCC, SC, HCP, ICO, DEC, OCT, NA };

const std::array<StructKind, 7>& all_kinds();
std::string kind_name(StructKind k);
StructKind kind_from_name(const std::string& name);

struct AtomCloud {
  std::vector<Vec3> coords;
  StructKind kind = StructKind::NA;
  double lattice_constant = 4.0;

  int size() const { return int(coords.size()); }
};

/// Which fields matter depends on the kind: cutoff for the lattice kinds,
/// shells for ICO, (p, q, r) for DEC, m for OCT.
struct SizeParams {
  double cutoff = 0.0;  // Å, spherical carve radius
  int shells = 0;
  int p = 0, q = 1, r = 0;
  int m = 0;
};

/// Atom count fell outside the configured bounds; caller resamples.
struct ClusterRejected : Error {
  explicit ClusterRejected(const std::string& msg, int n) : Error(msg), natoms(n) {}
  int natoms;
};

AtomCloud generate_cluster(StructKind kind, const SizeParams& sp,
                           double lattice_constant, int min_atoms = 5,
                           int max_atoms = 256);

/// All n(n-1)/2 unordered pair distances, unsorted.
std::vector<double> pair_distances(const AtomCloud& cloud);

struct KindRange {
  double cut_lo = 3.0, cut_hi = 7.5;  // lattice kinds, Å
  int s_lo = 1, s_hi = 3;             // ICO shells / DEC p / OCT m
  int q_lo = 1, q_hi = 2;             // DEC only
  int r_lo = 0, r_hi = 1;             // DEC only
  double a_lo = 3.6, a_hi = 4.4;      // lattice constant, Å
};

struct DatasetSpec {
  std::vector<std::pair<StructKind, int>> counts;  // generation order
  std::map<StructKind, KindRange> ranges;          // defaults used if absent
  int min_atoms = 5;
  int max_atoms = 64;
  uint64_t seed = 42;
  double split = 0.95;
  int max_retries = 500;  // per requested structure
};

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  StructKind kind = StructKind::NA;
  int natoms = 0;
  std::string split;  // "train" | "val"
};

/// Writes one XYZ per structure plus manifest.tsv into out_dir.
/// Deterministic for a fixed spec; duplicates by rounded distance multiset
/// are resampled away.
std::vector<ManifestEntry> generate_dataset(const DatasetSpec& spec,
                                            const std::string& out_dir);

DatasetSpec parse_dataset_spec(const std::string& text);
DatasetSpec load_dataset_spec(const std::string& path);

void write_xyz(const std::string& path, const AtomCloud& cloud);
AtomCloud read_xyz(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace cbldm
