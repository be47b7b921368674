#include "embgeom/probe_matrix.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace embgeom {

static_assert(std::endian::native == std::endian::little,
              "probe payloads are little-endian; big-endian hosts are not supported");

ProbeMatrix::ProbeMatrix(Eigen::MatrixXd b, nlohmann::json meta)
    : entries(std::move(b)), metadata(std::move(meta)) {
  if (entries.cols() > entries.rows()) {
    throw ValidationError("probe rank " + std::to_string(entries.cols()) +
                          " exceeds input dim " + std::to_string(entries.rows()));
  }
  if (!entries.allFinite()) throw ValidationError("probe matrix has non-finite entries");
  if (metadata.is_null()) metadata = nlohmann::json::object();
}

ProbeMatrix ProbeMatrix::identity(Eigen::Index k) {
  return ProbeMatrix(Eigen::MatrixXd::Identity(k, k));
}

namespace detail {

void write_header_and_payload(std::ostream& out, const nlohmann::json& header, const double* data,
                              std::size_t count) {
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw FormatError("probe", "write failed");
}

nlohmann::json read_header(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source, "missing probe header");
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source, std::string("bad probe header: ") + e.what());
  }
}

void read_payload(std::istream& in, const std::string& source, double* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
    throw FormatError(source, "truncated probe payload: expected " +
                                  std::to_string(count * sizeof(double)) + " bytes");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(source, "trailing bytes after probe payload");
  }
}

}  // namespace detail

void write_probe_matrix(const ProbeMatrix& probe, std::ostream& out) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = probe.entries;
  nlohmann::json header{{"format", "probe-matrix-v1"},
                        {"rows", probe.entries.rows()},
                        {"cols", probe.entries.cols()},
                        {"metadata", probe.metadata}};
  detail::write_header_and_payload(out, header, rows.data(), static_cast<std::size_t>(rows.size()));
}

void write_probe_matrix(const ProbeMatrix& probe, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open for writing");
  write_probe_matrix(probe, out);
}

ProbeMatrix read_probe_matrix(std::istream& in, const std::string& source) {
  const auto header = detail::read_header(in, source);
  if (header.value("format", "") != "probe-matrix-v1") {
    throw FormatError(source, "not a probe-matrix-v1 file");
  }
  const auto rows = header.at("rows").get<Eigen::Index>();
  const auto cols = header.at("cols").get<Eigen::Index>();
  if (rows < 1 || cols < 1) throw FormatError(source, "probe shape must be positive");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> entries(rows, cols);
  detail::read_payload(in, source, entries.data(), static_cast<std::size_t>(entries.size()));
  try {
    return ProbeMatrix(entries, header.value("metadata", nlohmann::json::object()));
  } catch (const ValidationError& e) {
    throw FormatError(source, e.what());
  }
}

ProbeMatrix read_probe_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return read_probe_matrix(in, path.string());
}

}  // namespace embgeom
