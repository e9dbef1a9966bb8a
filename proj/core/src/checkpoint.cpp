#include "threshnet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "threshnet/error.hpp"

namespace threshnet {

namespace {

template <typename T>
void PutLe(std::vector<unsigned char>& out, T value) {
  for (size_t k = 0; k < sizeof(T); ++k) {
    out.push_back(static_cast<unsigned char>((value >> (8 * k)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T GetLe() {
    if (pos_ + sizeof(T) > bytes_.size()) throw Error(ErrorKind::kIo, "truncated checkpoint");
    T v = 0;
    for (size_t k = 0; k < sizeof(T); ++k) {
      v |= static_cast<T>(static_cast<T>(bytes_[pos_ + k]) << (8 * k));
    }
    pos_ += sizeof(T);
    return v;
  }
  double GetF64() { return std::bit_cast<double>(GetLe<std::uint64_t>()); }
  bool done() const { return pos_ == bytes_.size(); }
  const unsigned char* raw(size_t n) {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::kIo, "truncated checkpoint");
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  size_t pos_ = 0;
};

std::vector<double> NodeScalars(const ModelInstance& model, int id) {
  std::vector<double> s = model.params(id);
  const auto& rm = model.running_mean(id);
  const auto& rv = model.running_var(id);
  s.insert(s.end(), rm.begin(), rm.end());
  s.insert(s.end(), rv.begin(), rv.end());
  return s;
}

}  // namespace

std::vector<unsigned char> SaveCheckpointBytes(const ModelInstance& model) {
  std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  const auto& nodes = model.graph().nodes();
  PutLe<std::uint32_t>(out, kCheckpointVersion);
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(nodes.size()));
  for (const auto& n : nodes) {
    const std::vector<double> s = NodeScalars(model, n.id);
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(n.id));
    PutLe<std::uint64_t>(out, s.size());
    for (double v : s) PutLe<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

void LoadCheckpointBytes(ModelInstance& model, const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.raw(4), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorKind::kIo, "not a threshnet checkpoint");
  }
  const auto version = r.GetLe<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kIo, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.GetLe<std::uint32_t>();
  const auto& nodes = model.graph().nodes();
  if (count != nodes.size()) {
    throw Error(ErrorKind::kIo, "checkpoint has " + std::to_string(count) +
                                    " nodes, graph has " + std::to_string(nodes.size()));
  }
  // Decode everything before touching the model so a bad file leaves it intact.
  std::vector<std::vector<double>> decoded(nodes.size());
  for (const auto& n : nodes) {
    const auto id = r.GetLe<std::uint32_t>();
    if (id != static_cast<std::uint32_t>(n.id)) {
      throw Error(ErrorKind::kIo, "unexpected node id " + std::to_string(id), n.id);
    }
    const auto scalars = r.GetLe<std::uint64_t>();
    const size_t expected = NodeScalars(model, n.id).size();
    if (scalars != expected) {
      throw Error(ErrorKind::kIo,
                  "scalar count " + std::to_string(scalars) + " != " + std::to_string(expected),
                  n.id);
    }
    auto& d = decoded[static_cast<size_t>(n.id)];
    d.resize(expected);
    for (double& v : d) v = r.GetF64();
  }
  if (!r.done()) throw Error(ErrorKind::kIo, "trailing bytes in checkpoint");
  for (const auto& n : nodes) {
    const auto& d = decoded[static_cast<size_t>(n.id)];
    auto& p = model.params(n.id);
    auto& rm = model.running_mean(n.id);
    auto& rv = model.running_var(n.id);
    auto it = d.begin();
    std::copy_n(it, p.size(), p.begin());
    it += static_cast<std::ptrdiff_t>(p.size());
    std::copy_n(it, rm.size(), rm.begin());
    it += static_cast<std::ptrdiff_t>(rm.size());
    std::copy_n(it, rv.size(), rv.begin());
  }
}

void SaveCheckpoint(const ModelInstance& model, const std::string& path) {
  const auto bytes = SaveCheckpointBytes(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorKind::kIo, "write to '" + path + "' failed");
}

void LoadCheckpoint(ModelInstance& model, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  LoadCheckpointBytes(model, bytes);
}

}  // namespace threshnet
