// Flat strategy-profile vector with per-player block structure.
#pragma once

#include <vector>

#include <Eigen/Dense>

#include "nashdyn/common.hpp"

namespace nashdyn {

struct ParamVector {
  Eigen::VectorXd flat;
  std::vector<int> offsets;  // size players+1; offsets.back() == flat.size()

  ParamVector() = default;

  ParamVector(Eigen::VectorXd values, const std::vector<int>& dims) {
    offsets.resize(dims.size() + 1);
    offsets[0] = 0;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      require(dims[i] > 0, "ParamVector: player block dims must be positive");
      offsets[i + 1] = offsets[i] + dims[i];
    }
    require(values.size() == offsets.back(),
            "ParamVector: blocks must tile the vector exactly");
    flat = std::move(values);
  }

  static ParamVector zeros(const std::vector<int>& dims) {
    int total = 0;
    for (int d : dims) total += d;
    return ParamVector(Eigen::VectorXd::Zero(total), dims);
  }

  int players() const { return static_cast<int>(offsets.size()) - 1; }
  int dim() const { return static_cast<int>(flat.size()); }
  int dim(int i) const { return offsets[i + 1] - offsets[i]; }

  Eigen::VectorBlock<Eigen::VectorXd> block(int i) {
    return flat.segment(offsets[i], dim(i));
  }
  Eigen::VectorBlock<const Eigen::VectorXd> block(int i) const {
    return flat.segment(offsets[i], dim(i));
  }

  std::vector<int> dims() const {
    std::vector<int> d(players());
    for (int i = 0; i < players(); ++i) d[i] = dim(i);
    return d;
  }

  ParamVector with_flat(Eigen::VectorXd values) const {
    require(values.size() == flat.size(), "ParamVector: size mismatch");
    ParamVector out = *this;
    out.flat = std::move(values);
    return out;
  }

  bool all_finite() const { return flat.allFinite(); }
};

}  // namespace nashdyn
