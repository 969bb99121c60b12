#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topo/linalg.hpp"

namespace topo {

enum class Generator { spirals, moons, circles, xor2, gauss };

Generator generator_from_string(const std::string& s);
std::string to_string(Generator g);
double default_noise(Generator g);
int default_overfit_per_class(Generator g);

struct TaskSpec {
  Generator gen = Generator::spirals;
  double rotation_deg = 0.0;  // one of {0, 45, 90} in the rosters
  double x_scale = 1.0;       // applied before rotation
  double noise = -1.0;        // < 0 means the generator default
  int samples_per_split = 600;
  uint64_t seed = 0;

  std::string task_id() const;  // e.g. "spirals-r45-x2"
};

struct Dataset2D {
  Matrix train_x;  // n x 2
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
};

// Deterministic per seed. Classes are interleaved so both splits are
// balanced to within one sample; the test split is a fresh draw from the
// same distribution. Scaling/rotation from the spec are applied last.
Dataset2D generate(const TaskSpec& spec);

// p -> R(theta) * diag(x_scale, 1) * p on both splits; labels unchanged.
Dataset2D augment(const Dataset2D& data, double rotation_deg, double x_scale);

// Keeps exactly per_class training samples of each class (seeded, original
// order preserved); the test split is untouched.
Dataset2D subsample(const Dataset2D& data, int per_class, uint64_t seed);

// Inspection dump: x,y,label,split with a header row.
void dump_csv(const Dataset2D& data, const std::string& path);

}  // namespace topo
