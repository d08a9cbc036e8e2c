#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace coxq {

struct Agent;

/// Self-describing tensor container: named shaped arrays of 64-bit floats plus
/// named byte blobs (RNG states). Raw little-endian doubles make the
/// round-trip bit-exact. See docs/formats.md for the layout.
class Checkpoint {
 public:
  struct Tensor {
    std::vector<std::uint64_t> shape;
    std::vector<double> values;
  };

  void put(const std::string& name, const Eigen::MatrixXd& m);
  void put(const std::string& name, const Eigen::VectorXd& v);
  void put_scalar(const std::string& name, double v);
  void put_blob(const std::string& name, std::string bytes);

  Eigen::MatrixXd get_matrix(const std::string& name) const;
  Eigen::VectorXd get_vector(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  const std::string& get_blob(const std::string& name) const;
  bool has(const std::string& name) const;

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  void save(const std::string& path) const;  // atomic write-then-rename
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, Tensor> tensors_;
  std::map<std::string, std::string> blobs_;
};

/// Packs every network parameter, optimizer moment and dual/temperature
/// scalar of the agent.
void pack_agent(Checkpoint& ck, const Agent& agent);

/// Restores into an agent of identical architecture; rejects shape
/// mismatches with a diagnostic naming the offending tensor.
void unpack_agent(const Checkpoint& ck, Agent& agent);

}  // namespace coxq
