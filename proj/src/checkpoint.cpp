#include "fscn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fscn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

constexpr std::string_view kMagic = "FSCNCKPT";
constexpr std::string_view kTrailer = "FSCNEND!";

class Writer {
 public:
  template <typename V>
  void pod(V value) {
    char raw[sizeof(V)];
    std::memcpy(raw, &value, sizeof(V));
    out_.append(raw, sizeof(V));
  }
  void bytes(std::string_view s) { out_.append(s); }
  void text(std::string_view s) {
    pod<std::uint64_t>(s.size());
    bytes(s);
  }
  void floats(const std::vector<float>& v) {
    pod<std::uint64_t>(v.size());
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename V>
  V pod(const char* what) {
    V value;
    std::memcpy(&value, take(sizeof(V), what).data(), sizeof(V));
    return value;
  }
  std::string_view take(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
    auto view = in_.substr(pos_, n);
    pos_ += n;
    return view;
  }
  std::uint64_t length(std::size_t element, const char* what) {
    const auto n = pod<std::uint64_t>(what);
    if (n > (in_.size() - pos_) / element) {
      throw CheckpointError(std::string("checkpoint truncated: ") + what + " length exceeds file");
    }
    return n;
  }
  std::string text(const char* what) { return std::string(take(length(1, what), what)); }
  std::vector<float> floats(const char* what) {
    const auto n = length(sizeof(float), what);
    std::vector<float> v(n);
    std::memcpy(v.data(), take(n * sizeof(float), what).data(), n * sizeof(float));
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const std::size_t count = ckpt.params.size();
  if (ckpt.optim.m.size() != count || ckpt.optim.v.size() != count) {
    throw CheckpointError("optimizer moments do not match parameter count");
  }
  Writer w;
  w.bytes(kMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.text(ckpt.config_json);
  w.pod<std::int64_t>(ckpt.step);
  w.pod<std::uint64_t>(count);
  for (const auto& p : ckpt.params) w.floats(p);
  for (const auto& m : ckpt.optim.m) w.floats(m);
  for (const auto& v : ckpt.optim.v) w.floats(v);
  w.pod<double>(ckpt.optim.hyper.beta1);
  w.pod<double>(ckpt.optim.hyper.beta2);
  w.pod<double>(ckpt.optim.hyper.eps);
  w.pod<double>(ckpt.optim.hyper.weight_decay);
  w.pod<std::int64_t>(ckpt.optim.step);
  w.text(ckpt.rng_state);
  w.pod<std::uint64_t>(ckpt.order.size());
  for (auto idx : ckpt.order) w.pod<std::uint64_t>(idx);
  w.pod<std::uint64_t>(ckpt.cursor);
  w.bytes(kTrailer);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size(), "magic") != kMagic) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.config_json = r.text("config");
  ckpt.step = r.pod<std::int64_t>("step");
  const auto count = r.length(sizeof(std::uint64_t), "tensor count");
  for (std::uint64_t k = 0; k < count; ++k) ckpt.params.push_back(r.floats("parameters"));
  for (std::uint64_t k = 0; k < count; ++k) ckpt.optim.m.push_back(r.floats("first moments"));
  for (std::uint64_t k = 0; k < count; ++k) ckpt.optim.v.push_back(r.floats("second moments"));
  ckpt.optim.hyper.beta1 = r.pod<double>("beta1");
  ckpt.optim.hyper.beta2 = r.pod<double>("beta2");
  ckpt.optim.hyper.eps = r.pod<double>("eps");
  ckpt.optim.hyper.weight_decay = r.pod<double>("weight_decay");
  ckpt.optim.step = r.pod<std::int64_t>("optimizer step");
  ckpt.rng_state = r.text("rng state");
  const auto order = r.length(sizeof(std::uint64_t), "order");
  ckpt.order.reserve(order);
  for (std::uint64_t k = 0; k < order; ++k) ckpt.order.push_back(r.pod<std::uint64_t>("order"));
  ckpt.cursor = r.pod<std::uint64_t>("cursor");
  if (r.take(kTrailer.size(), "trailer") != kTrailer) throw CheckpointError("checkpoint trailer corrupt");
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint trailer");
  for (std::size_t k = 0; k < ckpt.params.size(); ++k) {
    if (ckpt.optim.m[k].size() != ckpt.params[k].size() ||
        ckpt.optim.v[k].size() != ckpt.params[k].size()) {
      throw CheckpointError("checkpoint moment sizes disagree with parameter " + std::to_string(k));
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  // Write-then-rename keeps the previous checkpoint intact on failure.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace fscn
