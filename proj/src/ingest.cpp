#include "sqsn/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace sqsn {

namespace {

std::vector<int> identity_indices(int size) {
  std::vector<int> idx(static_cast<std::size_t>(size));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

GridDistribution from_row_major(int width, int height, const std::vector<double>& values) {
  GridDistribution d;
  d.width = width;
  d.height = height;
  d.mass.resize(static_cast<Eigen::Index>(width) * height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      d.mass[r + static_cast<Eigen::Index>(c) * height] =
          values[static_cast<std::size_t>(r) * width + c];
    }
  }
  d.kept_indices = identity_indices(width * height);
  return d;
}

// Header tokenizer shared by P2 and P5: skips whitespace and '#' comments.
class PgmCursor {
 public:
  explicit PgmCursor(const std::string& bytes) : bytes_(bytes) {}

  std::size_t line() const { return line_; }
  std::size_t offset() const { return pos_; }
  bool at_end() {
    skip();
    return pos_ >= bytes_.size();
  }

  std::string token() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError("pgm: unexpected end of file", line_);
    return bytes_.substr(start, pos_ - start);
  }

  long integer(const char* what) {
    const std::string tok = token();
    long value = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError(std::string("pgm: bad ") + what + " '" + tok + "'", line_);
    }
    return value;
  }

  // After maxval exactly one whitespace byte precedes the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw ParseError("pgm: missing separator before raster", pos_);
    }
    return pos_ + 1;
  }

 private:
  void skip() {
    while (pos_ < bytes_.size()) {
      const char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (ch == '\n') ++line_;
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

double box_blur_at(const std::vector<double>& g, int res, int r, int c) {
  double sum = 0.0;
  int count = 0;
  for (int dr = -2; dr <= 2; ++dr) {
    for (int dc = -2; dc <= 2; ++dc) {
      const int rr = r + dr;
      const int cc = c + dc;
      if (rr < 0 || rr >= res || cc < 0 || cc >= res) continue;
      sum += g[static_cast<std::size_t>(rr) + static_cast<std::size_t>(cc) * res];
      ++count;
    }
  }
  return sum / count;
}

}  // namespace

GridFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".pgm" ? GridFormat::Pgm : GridFormat::Csv;
}

GridDistribution parse_pgm(const std::string& bytes) {
  PgmCursor cur(bytes);
  const std::string magic = cur.at_end() ? std::string() : cur.token();
  if (magic != "P2" && magic != "P5") throw ParseError("pgm: expected P2 or P5 magic", 1);
  const long width = cur.integer("width");
  const long height = cur.integer("height");
  const long maxval = cur.integer("maxval");
  if (width <= 0 || height <= 0) throw ParseError("pgm: nonpositive dimensions", cur.line());
  if (maxval <= 0 || maxval > 65535) throw ParseError("pgm: maxval must be in [1, 65535]", cur.line());

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<double> values(count);
  if (magic == "P2") {
    for (std::size_t k = 0; k < count; ++k) {
      if (cur.at_end()) throw ParseError("pgm: too few pixels", cur.line());
      const long v = cur.integer("pixel");
      if (v < 0 || v > maxval) throw ParseError("pgm: pixel outside [0, maxval]", cur.line());
      values[k] = static_cast<double>(v);
    }
  } else {
    const std::size_t start = cur.raster_start();
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    if (bytes.size() < start + count * bpp) {
      throw ParseError("pgm: raster truncated", bytes.size());
    }
    for (std::size_t k = 0; k < count; ++k) {
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start + k * bpp);
      const long v = bpp == 1 ? p[0] : (static_cast<long>(p[0]) << 8) | p[1];
      if (v > maxval) throw ParseError("pgm: pixel outside [0, maxval]", start + k * bpp);
      values[k] = static_cast<double>(v);
    }
  }
  return from_row_major(static_cast<int>(width), static_cast<int>(height), values);
}

GridDistribution parse_csv(const std::string& text) {
  std::vector<double> values;
  int width = -1;
  int height = 0;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    int fields = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      std::string field = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      const auto first = field.find_first_not_of(" \t");
      const auto last = field.find_last_not_of(" \t");
      if (first == std::string::npos) throw ParseError("csv: empty field", line_no);
      field = field.substr(first, last - first + 1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw ParseError("csv: bad number '" + field + "'", line_no);
      }
      if (v < 0.0) throw NegativeMass("csv: negative mass on line " + std::to_string(line_no));
      values.push_back(v);
      ++fields;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (width < 0) width = fields;
    if (fields != width) throw ParseError("csv: ragged row", line_no);
    ++height;
  }
  if (height == 0) throw ParseError("csv: no data", line_no);
  return from_row_major(width, height, values);
}

GridDistribution load_grid(const std::filesystem::path& path, GridFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return format == GridFormat::Pgm ? parse_pgm(buf.str()) : parse_csv(buf.str());
}

GridDistribution load_grid(const std::filesystem::path& path) {
  return load_grid(path, format_from_path(path));
}

GridDistribution normalize_and_prune(const GridDistribution& dist) {
  const double total = dist.mass.sum();
  if (!(total > 0.0)) throw ZeroTotalMass("distribution has zero total mass");
  GridDistribution out;
  out.width = dist.width;
  out.height = dist.height;
  std::vector<double> kept;
  for (Eigen::Index p = 0; p < dist.mass.size(); ++p) {
    if (dist.mass[p] > 0.0) {
      kept.push_back(dist.mass[p] / total);
      out.kept_indices.push_back(dist.kept_indices[static_cast<std::size_t>(p)]);
    }
  }
  out.mass = Eigen::Map<const Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
  return out;
}

CostMatrix cost_sq_euclidean(const GridDistribution& a, const GridDistribution& b) {
  const int m = static_cast<int>(a.kept_indices.size());
  const int n = static_cast<int>(b.kept_indices.size());
  CostMatrix out;
  out.cost.resize(m, n);
  for (int j = 0; j < n; ++j) {
    const double r2 = b.pixel_row(j);
    const double c2 = b.pixel_col(j);
    for (int i = 0; i < m; ++i) {
      const double dr = a.pixel_row(i) - r2;
      const double dc = a.pixel_col(i) - c2;
      out.cost(i, j) = dr * dr + dc * dc;
    }
  }
  out.max_raw = m > 0 && n > 0 ? out.cost.maxCoeff() : 0.0;
  if (out.max_raw > 0.0) {
    out.cost /= out.max_raw;
  } else {
    out.degenerate = true;
  }
  return out;
}

std::string to_string(SyntheticClass c) {
  switch (c) {
    case SyntheticClass::WhiteNoise: return "whitenoise";
    case SyntheticClass::Smooth: return "smooth";
    case SyntheticClass::Bump: return "bump";
  }
  return "unknown";
}

SyntheticClass parse_synthetic_class(const std::string& name) {
  if (name == "whitenoise") return SyntheticClass::WhiteNoise;
  if (name == "smooth") return SyntheticClass::Smooth;
  if (name == "bump") return SyntheticClass::Bump;
  throw std::invalid_argument("unknown synthetic class '" + name + "'");
}

GridDistribution generate_synthetic(SyntheticClass cls, int resolution, std::uint64_t seed) {
  if (resolution < 2) throw std::invalid_argument("generate_synthetic: resolution must be >= 2");
  const int res = resolution;
  const std::size_t size = static_cast<std::size_t>(res) * res;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> g(size);

  switch (cls) {
    case SyntheticClass::WhiteNoise:
      for (auto& v : g) v = unit(rng);
      break;
    case SyntheticClass::Smooth: {
      std::vector<double> noise(size);
      for (auto& v : noise) v = unit(rng);
      for (int c = 0; c < res; ++c) {
        for (int r = 0; r < res; ++r) {
          g[static_cast<std::size_t>(r) + static_cast<std::size_t>(c) * res] = box_blur_at(noise, res, r, c);
        }
      }
      break;
    }
    case SyntheticClass::Bump: {
      const double r0 = unit(rng) * (res - 1);
      const double c0 = unit(rng) * (res - 1);
      const double width = std::max(1.0, res / 4.0);
      for (int c = 0; c < res; ++c) {
        for (int r = 0; r < res; ++r) {
          const double d2 = (r - r0) * (r - r0) + (c - c0) * (c - c0);
          g[static_cast<std::size_t>(r) + static_cast<std::size_t>(c) * res] =
              std::exp(-d2 / (2.0 * width * width));
        }
      }
      break;
    }
  }

  GridDistribution d;
  d.width = res;
  d.height = res;
  d.mass = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(size));
  d.mass /= d.mass.sum();
  d.mass.array() += 1e-6;
  d.mass /= d.mass.sum();
  d.kept_indices = identity_indices(res * res);
  return d;
}

std::string grid_to_csv(const GridDistribution& dist) {
  const Eigen::VectorXd full = embed_mass(dist.mass, dist);
  std::string out;
  char buf[32];
  for (int r = 0; r < dist.height; ++r) {
    for (int c = 0; c < dist.width; ++c) {
      const auto res = std::to_chars(buf, buf + sizeof buf, full[r + static_cast<Eigen::Index>(c) * dist.height]);
      if (c > 0) out.push_back(',');
      out.append(buf, res.ptr);
    }
    out.push_back('\n');
  }
  return out;
}

OtInstance build_ot_problem(const GridDistribution& a, const GridDistribution& b,
                            const OtOptions& options) {
  OtInstance inst{OtProblem{}, a, b, cost_sq_euclidean(a, b)};
  inst.problem = OtProblem::create(inst.cost.cost, a.mass, b.mass, options);
  return inst;
}

WbInstance build_wb_problem(const std::vector<GridDistribution>& dists,
                            const Eigen::VectorXd& weights, int support_width, int support_height,
                            bool scale) {
  if (static_cast<Eigen::Index>(dists.size()) != weights.size()) {
    throw DimensionMismatch("build_wb_problem: weights and distributions differ in count");
  }
  if (support_width <= 0 || support_height <= 0) {
    throw std::invalid_argument("build_wb_problem: support must be nonempty");
  }
  WbInstance inst;
  inst.inputs = dists;
  inst.support.width = support_width;
  inst.support.height = support_height;
  const int m = support_width * support_height;
  inst.support.mass = Eigen::VectorXd::Constant(m, 1.0 / m);
  inst.support.kept_indices = identity_indices(m);

  std::vector<Eigen::MatrixXd> distances;
  std::vector<Eigen::VectorXd> marginals;
  for (const auto& d : dists) {
    inst.costs.push_back(cost_sq_euclidean(inst.support, d));
    distances.push_back(inst.costs.back().cost);
    marginals.push_back(d.mass);
  }
  inst.problem = WbProblem::create(distances, marginals, weights, scale);
  return inst;
}

Eigen::MatrixXd embed_plan(const TransportPlan& plan, const GridDistribution& rows,
                           const GridDistribution& cols) {
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(rows.original_size(), cols.original_size());
  for (const auto& e : plan.entries) {
    full(rows.kept_indices[e.row], cols.kept_indices[e.col]) = e.value;
  }
  return full;
}

Eigen::VectorXd embed_mass(const Eigen::VectorXd& values, const GridDistribution& dist) {
  if (values.size() != static_cast<Eigen::Index>(dist.kept_indices.size())) {
    throw DimensionMismatch("embed_mass: length differs from retained support");
  }
  Eigen::VectorXd full = Eigen::VectorXd::Zero(dist.original_size());
  for (Eigen::Index p = 0; p < values.size(); ++p) full[dist.kept_indices[p]] = values[p];
  return full;
}

}  // namespace sqsn
