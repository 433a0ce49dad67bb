#include <bit>
#include <cstring>

#include "khid/error.hpp"
#include "khid/io.hpp"
#include "khid/tensor.hpp"

namespace khid::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void save_checkpoint(const std::string& prefix, const std::vector<NamedTensor>& tensors, std::uint64_t seed) {
  io::json manifest = io::document("khid.checkpoint");
  manifest["dtype"] = "float64";
  manifest["seed"] = seed;
  manifest["tensors"] = io::json::array();
  std::string blob;
  for (const auto& t : tensors) {
    manifest["tensors"].push_back({{"name", t.name},
                                   {"shape", {t.value.rows(), t.value.cols()}},
                                   {"offset", blob.size()}});
    const auto* bytes = reinterpret_cast<const char*>(t.value.data());
    blob.append(bytes, static_cast<std::size_t>(t.value.size()) * sizeof(double));
  }
  io::write_file(prefix + ".bin", blob);
  io::write_file(prefix + ".json", manifest.dump(2) + "\n");
}

std::vector<NamedTensor> load_checkpoint(const std::string& prefix, std::uint64_t* seed) {
  auto manifest = io::json::parse(io::read_file(prefix + ".json"));
  io::check_schema(manifest, "khid.checkpoint", prefix + ".json");
  if (manifest.at("dtype") != "float64") throw FormatError("checkpoint dtype must be float64");
  const std::string blob = io::read_file(prefix + ".bin");
  std::vector<NamedTensor> out;
  for (const auto& entry : manifest.at("tensors")) {
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (offset + bytes > blob.size()) throw FormatError("checkpoint blob truncated at " + entry.at("name").dump());
    Mat m(rows, cols);
    std::memcpy(m.data(), blob.data() + offset, bytes);
    out.push_back({entry.at("name").get<std::string>(), std::move(m)});
  }
  if (seed) *seed = manifest.at("seed").get<std::uint64_t>();
  return out;
}

}  // namespace khid::nn
