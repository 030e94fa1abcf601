#include "trailermatch/checkpoint.hpp"

#include "trailermatch/io_util.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace trailermatch {

namespace {

constexpr char kMagic[8] = {'T', 'M', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta) {
  std::map<std::string, std::string> header = meta;
  header["dim"] = std::to_string(params.dim);
  header["heads"] = std::to_string(params.heads);
  header["seed"] = std::to_string(params.seed);
  if (!header.count("epoch")) header["epoch"] = "0";

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  for (const auto& [k, v] : header) {
    put_string(out, k);
    put_string(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, m] : params.tensors) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    const std::size_t nbytes = static_cast<std::size_t>(m.size()) * sizeof(double);
    const std::size_t at = out.size();
    out.resize(at + nbytes);
    std::memcpy(out.data() + at, m.data(), nbytes);  // row-major storage
  }
  atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());

  Reader r(bytes);
  char magic[8];
  r.raw(magic, 8);

  Checkpoint ckpt;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ckpt.meta[k] = r.str();
  }
  if (!ckpt.meta.count("dim") || !ckpt.meta.count("heads"))
    throw std::runtime_error("checkpoint header missing dim/heads");
  ckpt.params.dim = std::stoi(ckpt.meta.at("dim"));
  ckpt.params.heads = std::stoi(ckpt.meta.at("heads"));
  ckpt.params.seed = ckpt.meta.count("seed")
                         ? std::stoull(ckpt.meta.at("seed"))
                         : 0;

  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    std::string name = r.str();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
    r.raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    if (!m.allFinite())
      throw std::runtime_error("checkpoint tensor has non-finite values: " + name);
    ckpt.params.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in checkpoint");

  // shape audit against the canonical layout
  const auto expected = param_shapes(ckpt.params.dim);
  if (expected.size() != ckpt.params.tensors.size())
    throw std::runtime_error("checkpoint parameter count does not match layout");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, shape] = expected[i];
    const auto& [got_name, got] = ckpt.params.tensors[i];
    if (name != got_name || got.rows() != shape.first || got.cols() != shape.second)
      throw std::runtime_error("checkpoint tensor mismatch at " + name);
  }
  return ckpt;
}

}  // namespace trailermatch
