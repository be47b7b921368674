#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "embgeom/error.hpp"

namespace embgeom {

// A k x m linear map B (k = embedding dim, m = probe rank). An embedding h is
// mapped to B^T h, so a batch of row-vector embeddings H becomes H * B.
struct ProbeMatrix {
  Eigen::MatrixXd entries;
  nlohmann::json metadata = nlohmann::json::object();

  ProbeMatrix() = default;
  explicit ProbeMatrix(Eigen::MatrixXd b, nlohmann::json meta = nlohmann::json::object());

  static ProbeMatrix identity(Eigen::Index k);

  Eigen::Index input_dim() const noexcept { return entries.rows(); }
  Eigen::Index rank() const noexcept { return entries.cols(); }
};

// Rows of `embeddings` are k-dimensional vectors; the result has m columns.
template <typename Derived>
Eigen::MatrixXd apply_probe(const ProbeMatrix& probe, const Eigen::MatrixBase<Derived>& embeddings) {
  if (embeddings.cols() != probe.input_dim()) {
    throw ValidationError("embedding dim " + std::to_string(embeddings.cols()) +
                          " does not match probe input dim " + std::to_string(probe.input_dim()));
  }
  return embeddings.template cast<double>() * probe.entries;
}

inline std::vector<Eigen::VectorXd> apply_probe(const ProbeMatrix& probe,
                                                std::span<const Eigen::VectorXd> embeddings) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(embeddings.size());
  for (const auto& h : embeddings) {
    if (h.size() != probe.input_dim()) {
      throw ValidationError("embedding dim " + std::to_string(h.size()) +
                            " does not match probe input dim " + std::to_string(probe.input_dim()));
    }
    out.push_back(probe.entries.transpose() * h);
  }
  return out;
}

// One JSON header line followed by rows*cols row-major little-endian float64.
void write_probe_matrix(const ProbeMatrix& probe, std::ostream& out);
void write_probe_matrix(const ProbeMatrix& probe, const std::filesystem::path& path);
ProbeMatrix read_probe_matrix(std::istream& in, const std::string& source = "<stream>");
ProbeMatrix read_probe_matrix(const std::filesystem::path& path);

namespace detail {
// Shared by the probe file formats: header line, then `count` doubles.
void write_header_and_payload(std::ostream& out, const nlohmann::json& header,
                              const double* data, std::size_t count);
nlohmann::json read_header(std::istream& in, const std::string& source);
void read_payload(std::istream& in, const std::string& source, double* data, std::size_t count);
}  // namespace detail

}  // namespace embgeom
