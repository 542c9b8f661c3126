#pragma once

#include <cstring>
#include <random>

#include "ablasim/gssa/definition.hpp"

namespace ablasim::testing {

inline double random_double(std::mt19937_64& rng) {
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0: return std::uniform_int_distribution<int>(-1000, 1000)(rng);
    case 1: return std::uniform_real_distribution<double>(-1, 1)(rng);
    case 2: return std::uniform_real_distribution<double>(-1e-3, 1e-3)(rng) * 1e-200;
    default: {
      // arbitrary finite bit patterns
      for (;;) {
        std::uint64_t bits = rng();
        double d;
        std::memcpy(&d, &bits, sizeof d);
        if (std::isfinite(d)) return d;
      }
    }
  }
}

inline std::string random_string(std::mt19937_64& rng) {
  static const std::string alphabet = "abcXYZ_09 &<>\"'\t\n;=/\xC3\xA9";
  std::string s;
  int n = std::uniform_int_distribution<int>(0, 12)(rng);
  for (int i = 0; i < n; ++i) s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
  return s;
}

inline std::string random_name(std::mt19937_64& rng, const char* prefix) {
  return std::string(prefix) + std::to_string(std::uniform_int_distribution<int>(0, 99999)(rng));
}

inline Value random_value(std::mt19937_64& rng) {
  switch (std::uniform_int_distribution<int>(0, 5)(rng)) {
    case 0: return random_double(rng);
    case 1: return Value(static_cast<std::int64_t>(rng()));
    case 2: return Value(std::bernoulli_distribution(0.5)(rng));
    case 3: return Value(random_string(rng));
    case 4: {
      FloatList l(std::uniform_int_distribution<int>(0, 6)(rng));
      for (auto& d : l) d = random_double(rng);
      return l;
    }
    default: {
      PointList l(std::uniform_int_distribution<int>(0, 4)(rng));
      for (auto& p : l) p = {random_double(rng), random_double(rng), random_double(rng)};
      return l;
    }
  }
}

inline Vec3 random_point(std::mt19937_64& rng) { return {random_double(rng), random_double(rng), random_double(rng)}; }

inline gssa::SimulationDefinition random_definition(std::mt19937_64& rng) {
  gssa::SimulationDefinition d;
  d.family = random_name(rng, "family_");
  if (std::bernoulli_distribution(0.5)(rng)) d.duration = std::uniform_real_distribution<double>(1, 3600)(rng);
  int np = std::uniform_int_distribution<int>(0, 12)(rng);
  for (int i = 0; i < np; ++i) d.parameters[random_name(rng, "P_")] = random_value(rng);
  int nn = std::uniform_int_distribution<int>(0, 4)(rng);
  for (int i = 1; i <= nn; ++i) {
    gssa::NeedleDef n;
    n.index = i;
    n.geometry_class = std::bernoulli_distribution(0.5)(rng) ? "straight_monopolar" : "extensible_tines";
    n.tip = random_point(rng);
    n.entry = random_point(rng);
    int k = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int j = 0; j < k; ++j) n.parameters[random_name(rng, "NEEDLE_")] = random_value(rng);
    d.needles.push_back(n);
  }
  int nr = std::uniform_int_distribution<int>(0, 5)(rng);
  static const char* groups[] = {"organ", "tumour", "vessels", "bronchi"};
  for (int i = 0; i < nr; ++i) {
    gssa::RegionDef r;
    r.name = "region" + std::to_string(i) + random_string(rng);
    r.group = groups[std::uniform_int_distribution<int>(0, 3)(rng)];
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
      case 0: r.payload = gssa::MaskFile{"masks/" + random_string(rng) + ".gsmask"}; break;
      case 1: r.payload = grid::Sphere{random_point(rng), random_double(rng)}; break;
      case 2: r.payload = grid::Cylinder{random_point(rng), random_point(rng), random_double(rng)}; break;
      default: r.payload = grid::Box{random_point(rng), random_point(rng)};
    }
    d.regions.push_back(r);
  }
  int na = std::uniform_int_distribution<int>(0, 3)(rng);
  for (int i = 0; i < na; ++i) {
    protocol::AlgorithmDef a;
    a.result = random_name(rng, "out_");
    int nargs = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int j = 0; j < nargs; ++j) a.arguments.push_back(random_name(rng, "arg_"));
    a.body = "PHASE p\n  WHEN time > 3 && power < 2 SET power = 1 # " + random_string(rng) + "\r\n  WHEN 1 END\n";
    d.algorithms.push_back(a);
  }
  return d;
}

}  // namespace ablasim::testing
