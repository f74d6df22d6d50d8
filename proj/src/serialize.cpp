#include "steerkit/serialize.hpp"

#include <zlib.h>

#include <charconv>
#include <cstring>
#include <fstream>
#include <vector>

namespace steerkit {

namespace {

constexpr char kMagic[4] = {'L', 'N', 'W', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
  buf.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;

  void need(size_t n, const char* what) const {
    if (static_cast<size_t>(end - p) < n)
      throw CorruptFileError(std::string("weights file truncated while reading ") + what);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return *p++;
  }
};

struct Record {
  std::string name;
  Shape shape;     // empty for rank-0 markers
  TensorF tensor;  // empty for rank-0 markers
  bool is_marker() const { return shape.empty(); }
};

void append_record(std::vector<std::uint8_t>& buf, const std::string& name, const TensorF* t) {
  put_u16(buf, static_cast<std::uint16_t>(name.size()));
  buf.insert(buf.end(), name.begin(), name.end());
  if (!t) {
    buf.push_back(0);  // rank 0: structural marker, no data
    return;
  }
  buf.push_back(static_cast<std::uint8_t>(t->rank()));
  for (int e : t->shape()) put_u32(buf, static_cast<std::uint32_t>(e));
  const size_t bytes = static_cast<size_t>(t->size()) * sizeof(float);
  const size_t at = buf.size();
  buf.resize(at + bytes);
  std::memcpy(buf.data() + at, t->data(), bytes);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t at = s.find(sep, start);
    if (at == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, at - start));
    start = at + 1;
  }
}

int parse_int(const std::string& s, const std::string& ctx) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw CorruptFileError("weights file: bad integer '" + s + "' in " + ctx);
  return v;
}

std::string layer_spec_string(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv:
      return "conv," + std::to_string(l.conv.in_channels) + "," + std::to_string(l.conv.out_channels) +
             "," + std::to_string(l.conv.kernel_h) + "," + std::to_string(l.conv.kernel_w) + "," +
             std::to_string(l.conv.stride);
    case LayerKind::Dropout:
      return "dropout," + format_double(l.rate);
    case LayerKind::Linear:
      return "linear," + std::to_string(l.in_features) + "," + std::to_string(l.out_features);
    default:
      return layer_kind_name(l.kind);
  }
}

LayerSpec layer_spec_from_fields(const std::vector<std::string>& f, const std::string& ctx) {
  const std::string& kind = f.at(0);
  if (kind == "conv") {
    if (f.size() != 6) throw CorruptFileError("weights file: conv spec needs 5 fields in " + ctx);
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.conv = ConvSpec{parse_int(f[1], ctx), parse_int(f[2], ctx), parse_int(f[3], ctx),
                      parse_int(f[4], ctx), parse_int(f[5], ctx)};
    return s;
  }
  if (kind == "linear") {
    if (f.size() != 3) throw CorruptFileError("weights file: linear spec needs 2 fields in " + ctx);
    return LayerSpec::make_linear(parse_int(f[1], ctx), parse_int(f[2], ctx));
  }
  if (kind == "dropout") {
    if (f.size() != 2) throw CorruptFileError("weights file: dropout spec needs 1 field in " + ctx);
    return LayerSpec::make_dropout(parse_double(f[1]));
  }
  if (kind == "maxpool") return LayerSpec::make_maxpool();
  if (kind == "avgpool") return LayerSpec::make_avgpool();
  if (kind == "relu") return LayerSpec::make_relu();
  if (kind == "elu") return LayerSpec::make_elu();
  if (kind == "flatten") return LayerSpec::make_flatten();
  throw CorruptFileError("weights file: unknown layer kind '" + kind + "' in " + ctx);
}

void append_network_records(std::vector<std::uint8_t>& buf, const Network<float>& net,
                            std::uint32_t& count) {
  const std::string input = "input," + std::to_string(net.input_shape.channels) + "," +
                            std::to_string(net.input_shape.height) + "," +
                            std::to_string(net.input_shape.width);
  append_record(buf, input, nullptr);
  ++count;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    append_record(buf, std::to_string(i) + "," + layer_spec_string(net.layers[i]), nullptr);
    ++count;
    if (!net.weights[i].empty()) {
      append_record(buf, std::to_string(i) + ",weight", &net.weights[i]);
      append_record(buf, std::to_string(i) + ",bias", &net.biases[i]);
      count += 2;
    }
  }
}

void write_file(const std::filesystem::path& path, std::vector<std::uint8_t> body,
                std::uint32_t record_count) {
  std::vector<std::uint8_t> buf;
  buf.reserve(body.size() + 16);
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u16(buf, kVersion);
  put_u32(buf, record_count);
  buf.insert(buf.end(), body.begin(), body.end());
  const auto crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<Record> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 + 2 + 4 + 4) throw CorruptFileError("weights file too short: " + path.string());
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw CorruptFileError("bad magic in " + path.string() + " (not a weights file)");

  const size_t payload = buf.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[payload + i]) << (8 * i);
  const auto computed = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(payload)));
  if (stored != computed) throw CorruptFileError("CRC mismatch in " + path.string());

  Reader r{buf.data() + 4, buf.data() + payload};
  const std::uint16_t version = r.u16("version");
  if (version != kVersion)
    throw CorruptFileError("unsupported weights format version " + std::to_string(version));
  const std::uint32_t count = r.u32("record count");

  std::vector<Record> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    const std::uint16_t name_len = r.u16("record name length");
    r.need(name_len, "record name");
    rec.name.assign(reinterpret_cast<const char*>(r.p), name_len);
    r.p += name_len;
    const std::uint8_t rank = r.u8("record rank");
    std::int64_t n = rank > 0 ? 1 : 0;
    for (int a = 0; a < rank; ++a) {
      const std::uint32_t e = r.u32("record extent");
      if (e == 0 || e > (1u << 28)) throw CorruptFileError("implausible extent in record " + rec.name);
      rec.shape.push_back(static_cast<int>(e));
      n *= e;
    }
    if (rank > 0) {
      r.need(static_cast<size_t>(n) * sizeof(float), "record data");
      TensorF t(rec.shape);
      std::memcpy(t.data(), r.p, static_cast<size_t>(n) * sizeof(float));
      r.p += static_cast<size_t>(n) * sizeof(float);
      rec.tensor = std::move(t);
    }
    records.push_back(std::move(rec));
  }
  if (r.p != r.end) throw CorruptFileError("trailing bytes after last record in " + path.string());
  return records;
}

// Rebuilds the network (spec + parameters) from records; `next` is advanced
// past everything consumed so checkpoint loading can continue from there.
Network<float> network_from_records(const std::vector<Record>& records, size_t& next) {
  if (records.empty() || !records[0].is_marker())
    throw CorruptFileError("weights file: first record must be the input marker");
  auto input_fields = split(records[0].name, ',');
  if (input_fields.size() != 4 || input_fields[0] != "input")
    throw CorruptFileError("weights file: malformed input marker '" + records[0].name + "'");
  Network<float> net;
  net.input_shape = Shape3{parse_int(input_fields[1], "input marker"),
                           parse_int(input_fields[2], "input marker"),
                           parse_int(input_fields[3], "input marker")};
  size_t i = 1;
  while (i < records.size()) {
    auto fields = split(records[i].name, ',');
    if (fields[0] == "ADAM" || fields[0] == "EPOCH") break;
    if (!records[i].is_marker())
      throw CorruptFileError("weights file: expected a layer marker, found tensor '" +
                             records[i].name + "'");
    const int layer_index = parse_int(fields[0], "layer marker");
    if (layer_index != static_cast<int>(net.layers.size()))
      throw CorruptFileError("weights file: layer markers out of order at '" + records[i].name + "'");
    fields.erase(fields.begin());
    LayerSpec spec = layer_spec_from_fields(fields, "layer " + std::to_string(layer_index));
    net.layers.push_back(spec);
    net.weights.emplace_back();
    net.biases.emplace_back();
    ++i;
    if (spec.kind == LayerKind::Conv || spec.kind == LayerKind::Linear) {
      const std::string wname = std::to_string(layer_index) + ",weight";
      const std::string bname = std::to_string(layer_index) + ",bias";
      if (i + 1 >= records.size() || records[i].name != wname || records[i + 1].name != bname ||
          records[i].is_marker() || records[i + 1].is_marker())
        throw CorruptFileError("weights file: missing parameter records for layer " +
                               std::to_string(layer_index));
      net.weights.back() = records[i].tensor;
      net.biases.back() = records[i + 1].tensor;
      i += 2;
    }
  }
  next = i;

  layer_output_shapes(net.input_shape, net.layers);  // rejects a non-chaining stored spec
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const LayerSpec& l = net.layers[li];
    if (l.kind == LayerKind::Conv) {
      const Shape want{l.conv.out_channels, l.conv.in_channels, l.conv.kernel_h, l.conv.kernel_w};
      if (net.weights[li].shape() != want || net.biases[li].shape() != Shape{l.conv.out_channels})
        throw IncompatibleWeightsError("layer " + std::to_string(li) + " tensor shape " +
                                       shape_to_string(net.weights[li].shape()) +
                                       " does not match its conv spec");
    } else if (l.kind == LayerKind::Linear) {
      if (net.weights[li].shape() != Shape{l.in_features, l.out_features} ||
          net.biases[li].shape() != Shape{l.out_features})
        throw IncompatibleWeightsError("layer " + std::to_string(li) + " tensor shape " +
                                       shape_to_string(net.weights[li].shape()) +
                                       " does not match its linear spec");
    }
  }
  return net;
}

std::string adam_marker(const AdamState<float>& st) {
  return "ADAM,step=" + std::to_string(st.step_count) + ",beta1=" + format_double(st.beta1) +
         ",beta2=" + format_double(st.beta2) + ",eps=" + format_double(st.epsilon) +
         ",lr=" + format_double(st.learning_rate);
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw CorruptFileError("bad decimal value '" + s + "'");
  return v;
}

void save_weights(const Network<float>& net, const std::filesystem::path& path) {
  std::vector<std::uint8_t> body;
  std::uint32_t count = 0;
  append_network_records(body, net, count);
  write_file(path, std::move(body), count);
}

Network<float> load_weights(const std::filesystem::path& path) {
  auto records = read_records(path);
  size_t next = 0;
  Network<float> net = network_from_records(records, next);
  if (next != records.size())
    throw CorruptFileError("weights file has unexpected extra sections; is it a checkpoint?");
  return net;
}

void save_checkpoint(const Network<float>& net, const AdamState<float>& adam, int epoch,
                     const std::filesystem::path& path) {
  std::vector<std::uint8_t> body;
  std::uint32_t count = 0;
  append_network_records(body, net, count);
  append_record(body, adam_marker(adam), nullptr);
  ++count;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (net.weights[i].empty()) continue;
    const std::string base = std::to_string(i);
    append_record(body, base + ",weight,m", &adam.m_weights[i]);
    append_record(body, base + ",weight,v", &adam.v_weights[i]);
    append_record(body, base + ",bias,m", &adam.m_biases[i]);
    append_record(body, base + ",bias,v", &adam.v_biases[i]);
    count += 4;
  }
  append_record(body, "EPOCH," + std::to_string(epoch), nullptr);
  ++count;
  write_file(path, std::move(body), count);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto records = read_records(path);
  size_t i = 0;
  Checkpoint ck;
  ck.net = network_from_records(records, i);
  if (i >= records.size() || split(records[i].name, ',')[0] != "ADAM")
    throw CorruptFileError("checkpoint missing ADAM section: " + path.string());

  ck.adam = adam_init(ck.net, 0.0);
  for (const auto& field : split(records[i].name, ',')) {
    const size_t eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "step") ck.adam.step_count = parse_int(val, "ADAM marker");
    else if (key == "beta1") ck.adam.beta1 = parse_double(val);
    else if (key == "beta2") ck.adam.beta2 = parse_double(val);
    else if (key == "eps") ck.adam.epsilon = parse_double(val);
    else if (key == "lr") ck.adam.learning_rate = parse_double(val);
  }
  ++i;
  for (size_t li = 0; li < ck.net.layers.size(); ++li) {
    if (ck.net.weights[li].empty()) continue;
    const std::string base = std::to_string(li);
    const std::pair<const char*, std::vector<TensorF>*> sections[] = {
        {",weight,m", &ck.adam.m_weights},
        {",weight,v", &ck.adam.v_weights},
        {",bias,m", &ck.adam.m_biases},
        {",bias,v", &ck.adam.v_biases}};
    for (const auto& [suffix, dest] : sections) {
      if (i >= records.size() || records[i].name != base + suffix)
        throw CorruptFileError("checkpoint missing moment record " + base + suffix);
      if (records[i].tensor.shape() != ck.net.weights[li].shape() &&
          records[i].tensor.shape() != ck.net.biases[li].shape())
        throw IncompatibleWeightsError("checkpoint moment record " + records[i].name +
                                       " has shape " + shape_to_string(records[i].tensor.shape()));
      (*dest)[li] = records[i].tensor;
      ++i;
    }
  }
  if (i >= records.size()) throw CorruptFileError("checkpoint missing EPOCH marker");
  auto epoch_fields = split(records[i].name, ',');
  if (epoch_fields.size() != 2 || epoch_fields[0] != "EPOCH")
    throw CorruptFileError("checkpoint has malformed EPOCH marker '" + records[i].name + "'");
  ck.epoch = parse_int(epoch_fields[1], "EPOCH marker");
  ++i;
  if (i != records.size()) throw CorruptFileError("checkpoint has trailing records");
  return ck;
}

}  // namespace steerkit
