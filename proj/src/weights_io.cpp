#include "cdnn/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

namespace cdnn {
namespace {

void for_each_record(
    Network<float>& net,
    const std::function<void(const std::string&, Tensor<float>&)>& fn) {
  for (size_t i = 0; i < net.layers.size(); ++i) {
    LayerParams<float>& p = net.params[i];
    if (p.w.numel() == 0) continue;
    const std::string& nm = net.layers[i].name;
    fn(nm + ".w", p.w);
    fn(nm + ".b", p.b);
    if (net.layers[i].has_batchnorm) {
      fn(nm + ".gamma", p.gamma);
      fn(nm + ".beta", p.beta);
      fn(nm + ".run_mean", p.run_mean);
      fn(nm + ".run_var", p.run_var);
    }
  }
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const uint8_t* p;
  size_t n, pos = 0;

  bool eof() const { return pos >= n; }
  void need(size_t k, const char* what) {
    if (n - pos < k)
      throw CorruptPayloadError(std::string("weight file ends inside ") +
                                what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::string str(size_t len, const char* what) {
    need(len, what);
    std::string s(reinterpret_cast<const char*>(p + pos), len);
    pos += len;
    return s;
  }
};

struct RawTensor {
  Shape4 shape{0, 0, 0, 0};
  std::vector<float> data;
};

}  // namespace

void save_weights(const Network<float>& net, const std::string& path) {
  std::string buf;
  buf += "CDNN";
  put_u32(buf, 1);  // version

  uint32_t count = 0;
  auto& mut = const_cast<Network<float>&>(net);
  for_each_record(mut, [&](const std::string&, Tensor<float>&) { ++count; });
  put_u32(buf, count);

  for_each_record(mut, [&](const std::string& name, Tensor<float>& t) {
    put_u32(buf, static_cast<uint32_t>(name.size()));
    buf += name;
    put_u32(buf, 4);
    put_u32(buf, static_cast<uint32_t>(t.shape.b));
    put_u32(buf, static_cast<uint32_t>(t.shape.c));
    put_u32(buf, static_cast<uint32_t>(t.shape.h));
    put_u32(buf, static_cast<uint32_t>(t.shape.w));
    for (float v : t.data) put_u32(buf, std::bit_cast<uint32_t>(v));
  });

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw WeightsError("cannot write weight file " + path);
}

Network<float> load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WeightsError("cannot open weight file " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());

  if (bytes.size() < 12 ||
      std::memcmp(bytes.data(), "CDNN", 4) != 0)
    throw CorruptHeaderError("not a CDNN weight file: " + path);
  Reader r{bytes.data(), bytes.size(), 4};
  const uint32_t version = r.u32("header");
  if (version != 1)
    throw UnknownVersionError("weight file version " +
                              std::to_string(version) + " not supported");
  const uint32_t count = r.u32("header");

  std::map<std::string, RawTensor> records;
  for (uint32_t k = 0; k < count; ++k) {
    const uint32_t name_len = r.u32("record name length");
    const std::string name = r.str(name_len, "record name");
    const uint32_t rank = r.u32("record rank");
    if (rank != 4)
      throw SchemaMismatchError("tensor " + name + " has rank " +
                                std::to_string(rank) + ", expected 4");
    RawTensor raw;
    raw.shape.b = r.u32("record extents");
    raw.shape.c = r.u32("record extents");
    raw.shape.h = r.u32("record extents");
    raw.shape.w = r.u32("record extents");
    for (int64_t e : {raw.shape.b, raw.shape.c, raw.shape.h, raw.shape.w})
      if (e < 1 || e > (1 << 20))
        throw CorruptPayloadError("implausible extent in tensor " + name);
    const int64_t numel = raw.shape.numel();
    r.need(static_cast<size_t>(numel) * 4, "record payload");
    raw.data.resize(static_cast<size_t>(numel));
    for (int64_t e = 0; e < numel; ++e)
      raw.data[static_cast<size_t>(e)] =
          std::bit_cast<float>(r.u32("record payload"));
    if (!records.emplace(name, std::move(raw)).second)
      throw SchemaMismatchError("duplicate tensor " + name);
  }
  if (!r.eof()) throw CorruptPayloadError("trailing bytes after last record");

  auto first = records.find("conv-1-1.w");
  if (first == records.end())
    throw SchemaMismatchError("missing tensor conv-1-1.w");
  const int in_ch = static_cast<int>(first->second.shape.c);

  Rng scratch_rng(0);
  Network<float> net = build_cdnn<float>(in_ch, scratch_rng);
  for_each_record(net, [&](const std::string& name, Tensor<float>& t) {
    auto it = records.find(name);
    if (it == records.end())
      throw SchemaMismatchError("missing tensor " + name);
    if (!(it->second.shape == t.shape))
      throw SchemaMismatchError("shape mismatch for " + name + ": file has " +
                                it->second.shape.str() + ", expected " +
                                t.shape.str());
    t.data = std::move(it->second.data);
    records.erase(it);
  });
  if (!records.empty())
    throw SchemaMismatchError("unknown tensor " + records.begin()->first);
  return net;
}

}  // namespace cdnn
