#include "cbfmeta/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cbfmeta/error.hpp"
#include "json.hpp"

namespace cbfmeta {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'C', 'B', 'F', 'M', 'F', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[pos + i]) << (8 * i);
  return v;
}

void put_double(std::vector<std::uint8_t>& out, double d) { put_le(out, std::bit_cast<std::uint64_t>(d)); }

double get_double(std::span<const std::uint8_t> bytes, std::size_t pos) {
  return std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
}

[[noreturn]] void mismatch(const std::string& why) {
  throw Error(ErrorCode::FormatMismatch, "checkpoint: " + why);
}

json spec_to_json(const NetSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden", s.hidden},
          {"output_dim", s.output_dim},
          {"activation", to_string(s.activation)}};
}

NetSpec spec_from_json(const json& j) {
  NetSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.output_dim = j.at("output_dim").get<int>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  return s;
}

std::vector<std::uint8_t> write_container(const FeatureNet& net, const Posterior* prior) {
  std::vector<double> payload;
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json entry = {{"rows", l.weight.rows()}, {"cols", l.weight.cols()}, {"weight_offset", payload.size()}};
    payload.insert(payload.end(), l.weight.data(), l.weight.data() + l.weight.size());
    entry["bias_offset"] = payload.size();
    payload.insert(payload.end(), l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back(entry);
  }
  json header = {{"spec", spec_to_json(net.spec())}, {"layers", layers}};
  if (prior != nullptr) {
    json p = {{"dim", prior->dim()}, {"sigma_bits", std::bit_cast<std::uint64_t>(prior->sigma())},
              {"mean_offset", payload.size()}};
    payload.insert(payload.end(), prior->mean().data(), prior->mean().data() + prior->mean().size());
    p["precision_offset"] = payload.size();
    payload.insert(payload.end(), prior->precision().data(),
                   prior->precision().data() + prior->precision().size());
    header["prior"] = p;
  }
  header["payload_doubles"] = payload.size();
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (double d : payload) put_double(out, d);
  return out;
}

struct Container {
  json header;
  std::span<const std::uint8_t> payload;
  std::size_t doubles = 0;

  double at(std::size_t i) const {
    if (i >= doubles) mismatch("payload index out of range");
    return get_double(payload, 8 * i);
  }
};

Container read_container(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kPrefix = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < kPrefix) mismatch("truncated prefix");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) mismatch("bad magic");
  if (get_le<std::uint32_t>(bytes, 8) != kVersion) mismatch("unsupported version");
  const auto hlen = get_le<std::uint64_t>(bytes, 12);
  if (hlen > bytes.size() - kPrefix) mismatch("truncated header");
  Container c;
  try {
    c.header = json::parse(bytes.begin() + kPrefix, bytes.begin() + kPrefix + static_cast<std::ptrdiff_t>(hlen));
    c.doubles = c.header.at("payload_doubles").get<std::size_t>();
  } catch (const json::exception& e) {
    mismatch(std::string("header: ") + e.what());
  }
  const std::size_t start = kPrefix + hlen;
  if ((bytes.size() - start) != 8 * c.doubles) mismatch("payload length does not match header");
  c.payload = bytes.subspan(start);
  return c;
}

FeatureNet net_from_container(const Container& c) {
  try {
    FeatureNet net(spec_from_json(c.header.at("spec")));
    const auto& layers = c.header.at("layers");
    if (layers.size() != net.layers().size()) mismatch("layer count does not match spec");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      auto& l = net.mutable_layers()[k];
      const auto rows = layers[k].at("rows").get<Eigen::Index>();
      const auto cols = layers[k].at("cols").get<Eigen::Index>();
      if (rows != l.weight.rows() || cols != l.weight.cols()) mismatch("layer shape does not match spec");
      const auto w = layers[k].at("weight_offset").get<std::size_t>();
      const auto b = layers[k].at("bias_offset").get<std::size_t>();
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = c.at(w + i);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = c.at(b + i);
    }
    return net;
  } catch (const json::exception& e) {
    mismatch(std::string("layers: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FormatMismatch) throw;
    mismatch(e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> save_net(const FeatureNet& net) { return write_container(net, nullptr); }

FeatureNet load_net(std::span<const std::uint8_t> bytes) { return net_from_container(read_container(bytes)); }

std::vector<std::uint8_t> save_bundle(const ModelBundle& bundle) {
  return write_container(bundle.net, &bundle.prior);
}

ModelBundle load_bundle(std::span<const std::uint8_t> bytes) {
  const Container c = read_container(bytes);
  FeatureNet net = net_from_container(c);
  if (!c.header.contains("prior")) mismatch("no prior block");
  try {
    const auto& p = c.header.at("prior");
    const int d = p.at("dim").get<int>();
    if (d != net.output_dim()) mismatch("prior dimension does not match the basis size");
    const double sigma = std::bit_cast<double>(p.at("sigma_bits").get<std::uint64_t>());
    Eigen::VectorXd mean(d);
    Eigen::MatrixXd prec(d, d);
    const auto mo = p.at("mean_offset").get<std::size_t>();
    const auto po = p.at("precision_offset").get<std::size_t>();
    for (int i = 0; i < d; ++i) mean(i) = c.at(mo + i);
    for (Eigen::Index i = 0; i < prec.size(); ++i) prec.data()[i] = c.at(po + i);
    return {std::move(net), Posterior(std::move(mean), std::move(prec), sigma)};
  } catch (const json::exception& e) {
    mismatch(std::string("prior: ") + e.what());
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FormatMismatch, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::ArtifactWriteFailure, "cannot write " + path.string());
}

void save_bundle_file(const std::filesystem::path& path, const ModelBundle& bundle) {
  write_file_bytes(path, save_bundle(bundle));
}

ModelBundle load_bundle_file(const std::filesystem::path& path) {
  return load_bundle(read_file_bytes(path));
}

}  // namespace cbfmeta
