#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "data/dataset.hpp"

namespace dvqa::data {

enum class TestPrior {
  Inverted,  // head answer gets (1-bias)/(k-1), the rest share the remainder
  Uniform,   // every answer 1/k
};

// Changed-prior benchmark. Each question type t owns answers t*k .. t*k+k-1.
// An instance draws a concept c in [0,k) (skewed toward the type's head on
// train), a question shift r in [0,k) and shows the visual value
// v = (c - r) mod k as a noisy embedding. The answer is t*k + c, so it needs
// v from the image and r from the question.
struct GenConfig {
  std::size_t num_types = 6;
  std::size_t answers_per_type = 4;
  std::size_t train_size = 10000;
  std::size_t test_size = 4000;
  double bias = 0.8;
  double visual_noise = 4.0;
  std::size_t image_dim = 32;
  std::size_t filler_tokens = 4;
  TestPrior test_prior = TestPrior::Inverted;

  void validate() const;
  std::string to_json() const;
};

const char* test_prior_name(TestPrior p);
TestPrior parse_test_prior(const std::string& s);

// Deterministic in (cfg, seed). Instances carry the visual value v as their
// latent concept; ids are train 0..n-1 then test, one image per instance.
Dataset generate_synthetic(const GenConfig& cfg, std::uint64_t seed);

// Index of the head answer of every type, derived from the same seed.
std::vector<std::size_t> synthetic_heads(const Dataset& ds);

}  // namespace dvqa::data
