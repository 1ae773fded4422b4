#include "sdan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sdan/errors.hpp"

namespace sdan {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'D', 'A', 'N'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, const std::string& source)
      : data_(data), source_(source) {}

  const std::uint8_t* take(std::size_t n) {
    if (n > data_.size() - pos_) fail("truncated");
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("checkpoint " + source_ + ": " + what);
  }

 private:
  std::span<const std::uint8_t> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

void write_tensors(Writer& w, const std::vector<NamedTensor>& tensors) {
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.tensor.dtype()));
    const Shape& s = t.tensor.shape();
    for (std::size_t e : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(e));
    dispatch(t.tensor.dtype(), [&](auto tag) {
      using T = decltype(tag);
      using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      for (T v : t.tensor.data<T>()) {
        if constexpr (sizeof(T) == 4) {
          w.u32(std::bit_cast<Bits>(v));
        } else {
          w.u64(std::bit_cast<Bits>(v));
        }
      }
    });
  }
}

std::vector<NamedTensor> read_tensors(Reader& r) {
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    const std::uint8_t* name = r.take(len);
    NamedTensor t;
    t.name.assign(reinterpret_cast<const char*>(name), len);
    const std::uint8_t dtype = r.u8();
    if (dtype > 1) r.fail("tensor '" + t.name + "' has unknown dtype tag");
    Shape s;
    s.n = r.u32();
    s.c = r.u32();
    s.h = r.u32();
    s.w = r.u32();
    const std::size_t width = dtype == 0 ? 4 : 8;
    const std::size_t budget = r.remaining() / width;
    std::size_t count = 1;
    for (std::size_t e : {s.n, s.c, s.h, s.w}) {
      if (e != 0 && count > budget / e) r.fail("truncated");
      count *= e;
    }
    t.tensor = Tensor(s, static_cast<DType>(dtype));
    dispatch(t.tensor.dtype(), [&](auto tag) {
      using T = decltype(tag);
      for (T& v : t.tensor.data<T>()) {
        if constexpr (sizeof(T) == 4) {
          v = std::bit_cast<T>(r.u32());
        } else {
          v = std::bit_cast<T>(r.u64());
        }
      }
    });
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void check_against(const std::vector<NamedTensor>& tensors,
                   const ParameterSet& expected, const std::string& what,
                   const Reader& r) {
  if (tensors.size() != expected.size()) {
    r.fail(what + " holds " + std::to_string(tensors.size()) +
           " tensors, config implies " + std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const NamedParam& p = expected.entries()[i];
    if (tensors[i].name != p.name) {
      r.fail(what + " tensor " + std::to_string(i) + " is '" + tensors[i].name +
             "', config expects '" + p.name + "'");
    }
    if (tensors[i].tensor.shape() != p.var.shape()) {
      r.fail(what + " tensor '" + p.name + "' has shape " +
             tensors[i].tensor.shape().str() + ", config expects " +
             p.var.shape().str());
    }
  }
}

}  // namespace

Checkpoint make_checkpoint(const SdanModel& model,
                           const std::vector<NamedTensor>* ema) {
  Checkpoint ckpt{model.config(), model.parameters().snapshot(), std::nullopt};
  if (ema) ckpt.ema = *ema;
  return ckpt;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  const ModelConfig& c = ckpt.config;
  for (int v : {c.scale, c.channels, c.num_blocks, c.replicate_n, c.star_kernel,
                c.strip_kernel, c.square_kernel, c.dilation, c.distill_channels}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u8(c.enable_sdm ? 1 : 0);
  w.u8(c.enable_mmlka ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(c.attention_variant));
  write_tensors(w, ckpt.params);
  w.u8(ckpt.ema ? 1 : 0);
  if (ckpt.ema) write_tensors(w, *ckpt.ema);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes,
                             const std::string& source) {
  Reader r(bytes, source);
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, kMagic.data(), 4) != 0) r.fail("bad magic bytes");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  for (int* field : {&c.scale, &c.channels, &c.num_blocks, &c.replicate_n,
                     &c.star_kernel, &c.strip_kernel, &c.square_kernel,
                     &c.dilation, &c.distill_channels}) {
    *field = static_cast<int>(r.u32());
  }
  c.enable_sdm = r.u8() != 0;
  c.enable_mmlka = r.u8() != 0;
  const std::uint8_t variant = r.u8();
  if (variant > 2) r.fail("unknown attention variant tag");
  c.attention_variant = static_cast<AttentionVariant>(variant);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }

  ckpt.params = read_tensors(r);
  if (r.u8() != 0) ckpt.ema = read_tensors(r);
  if (!r.done()) r.fail("trailing bytes after tensor data");

  const SdanModel reference(c);
  check_against(ckpt.params, reference.parameters(), "params", r);
  if (ckpt.ema) check_against(*ckpt.ema, reference.parameters(), "ema", r);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint " + path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("checkpoint " + path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint " + path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

void load_weights(SdanModel& model, const Checkpoint& ckpt, bool prefer_ema) {
  if (!(model.config() == ckpt.config)) {
    throw ConfigError("load_weights: model config differs from checkpoint config");
  }
  model.parameters().assign(prefer_ema && ckpt.ema ? *ckpt.ema : ckpt.params);
}

}  // namespace sdan
