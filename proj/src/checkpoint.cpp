#include "mtlsar/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mtlsar/error.hpp"

namespace mtlsar {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'T', 'L', 'S', 'A', 'R', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw Error(ErrorKind::io, "cannot write checkpoint " + path);
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(std::span<const double> v) {
    u64(v.size());
    bytes(v.data(), v.size_bytes());
  }
  void finish() {
    out_.flush();
    if (!out_) throw Error(ErrorKind::io, "failed writing checkpoint " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(ErrorKind::io, "cannot open checkpoint " + path);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) bad("truncated file");
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1u << 24)) bad("implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void doubles(std::span<double> dst, const std::string& name) {
    const std::uint64_t n = u64();
    if (n != dst.size()) bad("tensor " + name + " has " + std::to_string(n) + " values, expected " +
                             std::to_string(dst.size()));
    bytes(dst.data(), dst.size_bytes());
  }
  bool at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }
  [[noreturn]] void bad(const std::string& what) {
    throw Error(ErrorKind::data, "checkpoint " + path_ + ": " + what);
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, MtlNetwork& network, const RunConfig& config,
                     const std::vector<std::string>& class_names, std::size_t epochs_done) {
  require(config.network == network.config(), "save_checkpoint: run config does not describe this network");
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  std::uint32_t version = kFormatVersion;
  w.bytes(&version, sizeof version);
  w.str(run_config_json(config));
  w.u64(class_names.size());
  for (const auto& name : class_names) w.str(name);
  w.u64(epochs_done);

  const auto params = network.parameters();
  w.u64(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    w.doubles(p.value);
  }
  for (const auto& [name, bn] : network.norm_layers()) {
    const std::uint8_t flag = bn->has_running_stats ? 1 : 0;
    w.bytes(&flag, 1);
  }
  const auto buffers = network.buffers();
  w.u64(buffers.size());
  for (const auto& b : buffers) {
    w.str(b.name);
    w.doubles(b.value);
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.bad("not a checkpoint file");
  std::uint32_t version = 0;
  r.bytes(&version, sizeof version);
  if (version != kFormatVersion) r.bad("unsupported format version " + std::to_string(version));

  Checkpoint ck;
  try {
    ck.config = parse_run_config(r.str());
    ck.config.network.validate();
  } catch (const Error& e) {
    r.bad(std::string("bad embedded config: ") + e.what());
  }
  const std::uint64_t classes = r.u64();
  if (classes != ck.config.network.num_classes) r.bad("class name count differs from num_classes");
  for (std::uint64_t i = 0; i < classes; ++i) ck.class_names.push_back(r.str());
  ck.epochs_done = r.u64();

  Rng rng(0);
  ck.network = MtlNetwork::build(ck.config.network, rng);
  auto params = ck.network.parameters();
  if (r.u64() != params.size()) r.bad("parameter tensor count differs from the config");
  for (auto& p : params) {
    if (r.str() != p.name) r.bad("unexpected tensor order at " + p.name);
    r.doubles(p.value, p.name);
  }
  for (auto& [name, bn] : ck.network.norm_layers()) {
    std::uint8_t flag = 0;
    r.bytes(&flag, 1);
    bn->has_running_stats = flag != 0;
  }
  auto buffers = ck.network.buffers();
  if (r.u64() != buffers.size()) r.bad("buffer count differs from the config");
  for (auto& b : buffers) {
    if (r.str() != b.name) r.bad("unexpected buffer order at " + b.name);
    r.doubles(b.value, b.name);
  }
  if (!r.at_end()) r.bad("trailing bytes");
  return ck;
}

}  // namespace mtlsar
