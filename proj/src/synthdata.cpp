#include "topo/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "topo/common.hpp"

namespace topo {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Generator generator_from_string(const std::string& s) {
  if (s == "spirals") return Generator::spirals;
  if (s == "moons") return Generator::moons;
  if (s == "circles") return Generator::circles;
  if (s == "xor") return Generator::xor2;
  if (s == "gauss") return Generator::gauss;
  throw std::invalid_argument("unknown generator: " + s);
}

std::string to_string(Generator g) {
  switch (g) {
    case Generator::spirals: return "spirals";
    case Generator::moons: return "moons";
    case Generator::circles: return "circles";
    case Generator::xor2: return "xor";
    default: return "gauss";
  }
}

double default_noise(Generator g) {
  switch (g) {
    case Generator::spirals: return 0.1;
    case Generator::moons: return 0.1;
    case Generator::circles: return 0.05;
    case Generator::xor2: return 0.0;
    default: return 0.5;  // gauss: isotropic sigma
  }
}

int default_overfit_per_class(Generator g) {
  switch (g) {
    case Generator::spirals: return 25;
    case Generator::moons: return 10;
    case Generator::circles: return 10;
    case Generator::xor2: return 8;
    default: return 2;  // gauss
  }
}

std::string TaskSpec::task_id() const {
  std::ostringstream os;
  os << topo::to_string(gen) << "-r" << static_cast<int>(rotation_deg) << "-x"
     << static_cast<int>(x_scale);
  return os.str();
}

namespace {

void sample_point(Generator gen, int cls, double noise, Rng& rng, double& x, double& y) {
  switch (gen) {
    case Generator::spirals: {
      // Two Archimedean arms offset by pi, radius theta/pi over [0, 3*pi].
      // The radial gap between arms is 1, an order of magnitude above the
      // default jitter, so the arms stay resolvable at every turn.
      const double t = rng.uniform();
      const double theta = 3.0 * kPi * t;
      const double radius = theta / kPi;
      const double angle = theta + (cls == 0 ? 0.0 : kPi);
      x = radius * std::cos(angle) + noise * rng.normal();
      y = radius * std::sin(angle) + noise * rng.normal();
      break;
    }
    case Generator::moons: {
      const double t = rng.uniform(0.0, kPi);
      if (cls == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      x += noise * rng.normal();
      y += noise * rng.normal();
      break;
    }
    case Generator::circles: {
      const double ang = rng.uniform(0.0, 2.0 * kPi);
      const double r = cls == 0 ? 1.0 : 0.5;
      x = r * std::cos(ang) + noise * rng.normal();
      y = r * std::sin(ang) + noise * rng.normal();
      break;
    }
    case Generator::xor2: {
      // Uniform over the two quadrant pairs of the matching label; the
      // label is sign(x) != sign(y).
      const double u = rng.uniform();
      const double v = rng.uniform();
      const bool flip = rng.below(2) == 1;
      if (cls == 0) {
        x = flip ? -u : u;
        y = flip ? -v : v;
      } else {
        x = flip ? u : -u;
        y = flip ? -v : v;
      }
      x += noise * rng.normal();
      y += noise * rng.normal();
      break;
    }
    default: {  // gauss
      const double cx = cls == 0 ? 1.0 : -1.0;
      x = cx + noise * rng.normal();
      y = noise * rng.normal();
      break;
    }
  }
}

void fill_split(Generator gen, double noise, int count, Rng& rng, Matrix& xs,
                std::vector<int>& ys) {
  xs = Matrix(count, 2);
  ys.resize(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int cls = i % 2;  // interleaved for exact balance on even counts
    double x = 0.0, y = 0.0;
    sample_point(gen, cls, noise, rng, x, y);
    xs(i, 0) = x;
    xs(i, 1) = y;
    ys[static_cast<size_t>(i)] = cls;
  }
}

}  // namespace

Dataset2D generate(const TaskSpec& spec) {
  if (spec.samples_per_split < 4)
    throw std::invalid_argument("generate: need at least two samples per class per split");
  const double noise = spec.noise < 0.0 ? default_noise(spec.gen) : spec.noise;
  Rng rng(spec.seed);
  Dataset2D data;
  fill_split(spec.gen, noise, spec.samples_per_split, rng, data.train_x, data.train_y);
  fill_split(spec.gen, noise, spec.samples_per_split, rng, data.test_x, data.test_y);
  return augment(data, spec.rotation_deg, spec.x_scale);
}

Dataset2D augment(const Dataset2D& data, double rotation_deg, double x_scale) {
  if (x_scale <= 0.0) throw std::invalid_argument("augment: x_scale must be positive");
  const double th = rotation_deg * kPi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const auto map = [&](const Matrix& in) {
    Matrix out(in.rows, 2);
    for (int i = 0; i < in.rows; ++i) {
      const double px = in(i, 0) * x_scale;  // scaling applied before rotation
      const double py = in(i, 1);
      out(i, 0) = c * px - s * py;
      out(i, 1) = s * px + c * py;
    }
    return out;
  };
  Dataset2D out;
  out.train_x = map(data.train_x);
  out.train_y = data.train_y;
  out.test_x = map(data.test_x);
  out.test_y = data.test_y;
  return out;
}

Dataset2D subsample(const Dataset2D& data, int per_class, uint64_t seed) {
  std::vector<int> by_class[2];
  for (int i = 0; i < data.train_x.rows; ++i)
    by_class[data.train_y[static_cast<size_t>(i)]].push_back(i);
  Rng rng(seed);
  std::vector<int> picked;
  for (int cls = 0; cls < 2; ++cls) {
    const int avail = static_cast<int>(by_class[cls].size());
    if (per_class > avail)
      throw std::invalid_argument("subsample: not enough samples in class " + std::to_string(cls));
    for (int idx : rng.sample_indices(avail, per_class))
      picked.push_back(by_class[cls][static_cast<size_t>(idx)]);
  }
  std::sort(picked.begin(), picked.end());  // keep original order
  Dataset2D out;
  out.train_x = Matrix(static_cast<int>(picked.size()), 2);
  out.train_y.resize(picked.size());
  for (size_t i = 0; i < picked.size(); ++i) {
    out.train_x(static_cast<int>(i), 0) = data.train_x(picked[i], 0);
    out.train_x(static_cast<int>(i), 1) = data.train_x(picked[i], 1);
    out.train_y[i] = data.train_y[static_cast<size_t>(picked[i])];
  }
  out.test_x = data.test_x;
  out.test_y = data.test_y;
  return out;
}

void dump_csv(const Dataset2D& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dump_csv: cannot open " + path);
  out << "x,y,label,split\n";
  char buf[128];
  const auto emit = [&](const Matrix& xs, const std::vector<int>& ys, const char* split) {
    for (int i = 0; i < xs.rows; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%s\n", xs(i, 0), xs(i, 1),
                    ys[static_cast<size_t>(i)], split);
      out << buf;
    }
  };
  emit(data.train_x, data.train_y, "train");
  emit(data.test_x, data.test_y, "test");
}

}  // namespace topo
