#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sqsn/linalg.hpp"
#include "sqsn/model.hpp"

namespace sqsn {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : std::runtime_error(what), location_(location) {}
  /// 1-based line for CSV and PGM P2, byte offset for PGM P5.
  std::size_t location() const { return location_; }

 private:
  std::size_t location_;
};

class NegativeMass : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroTotalMass : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mass on a width × height pixel grid. Pixel (row ℓ, column k) has
/// original index ℓ + k·height (column-major). After pruning, `mass` holds
/// only the retained pixels and kept_indices[p] is the original index of
/// retained entry p.
struct GridDistribution {
  int width = 0;
  int height = 0;
  Eigen::VectorXd mass;
  std::vector<int> kept_indices;

  int original_size() const { return width * height; }
  int pixel_row(int p) const { return kept_indices[p] % height; }
  int pixel_col(int p) const { return kept_indices[p] / height; }
};

enum class GridFormat { Pgm, Csv };

/// Guesses from the extension (.pgm → Pgm, anything else → Csv).
GridFormat format_from_path(const std::filesystem::path& path);

GridDistribution parse_pgm(const std::string& bytes);
GridDistribution parse_csv(const std::string& text);
GridDistribution load_grid(const std::filesystem::path& path, GridFormat format);
GridDistribution load_grid(const std::filesystem::path& path);

GridDistribution normalize_and_prune(const GridDistribution& dist);

struct CostMatrix {
  Eigen::MatrixXd cost;
  double max_raw = 0.0;
  bool degenerate = false;  // every pair at distance zero; cost left at 0
};

/// Squared Euclidean pixel distances over retained pixels, divided by the
/// largest one.
CostMatrix cost_sq_euclidean(const GridDistribution& a, const GridDistribution& b);

enum class SyntheticClass { WhiteNoise, Smooth, Bump };

std::string to_string(SyntheticClass c);
SyntheticClass parse_synthetic_class(const std::string& name);

/// Square resolution × resolution grid, strictly positive, sums to 1.
GridDistribution generate_synthetic(SyntheticClass cls, int resolution, std::uint64_t seed);

/// Writes `mass` embedded into the full grid as CSV (one line per pixel row).
std::string grid_to_csv(const GridDistribution& dist);

struct OtInstance {
  OtProblem problem;
  GridDistribution a;
  GridDistribution b;
  CostMatrix cost;
};

OtInstance build_ot_problem(const GridDistribution& a, const GridDistribution& b,
                            const OtOptions& options = {});

struct WbInstance {
  WbProblem problem;
  std::vector<GridDistribution> inputs;
  GridDistribution support;  // full grid, uniform placeholder mass
  std::vector<CostMatrix> costs;
};

/// Barycenter support is the full support_width × support_height grid.
WbInstance build_wb_problem(const std::vector<GridDistribution>& dists,
                            const Eigen::VectorXd& weights, int support_width, int support_height,
                            bool scale = true);

/// Places pruned row/column values back at original indices (zeros elsewhere).
Eigen::MatrixXd embed_plan(const TransportPlan& plan, const GridDistribution& rows,
                           const GridDistribution& cols);
Eigen::VectorXd embed_mass(const Eigen::VectorXd& values, const GridDistribution& dist);

}  // namespace sqsn
