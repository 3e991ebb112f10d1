#include "dwiratio/model_file.hpp"

#include <cstring>
#include <vector>

#include "dwiratio/error.hpp"
#include "dwiratio/file_util.hpp"

namespace dwiratio {

namespace {

std::vector<std::vector<std::uint32_t>> shape_table(const ConvNetParams& params) {
  std::vector<std::vector<std::uint32_t>> shapes;
  for (const auto& layer : params.layers) {
    shapes.push_back({static_cast<std::uint32_t>(layer.out_channels), static_cast<std::uint32_t>(layer.in_channels), 3, 3});
    shapes.push_back({static_cast<std::uint32_t>(layer.out_channels)});
  }
  return shapes;
}

void append_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  void doubles(std::span<double> out, const char* what) {
    need(out.size() * 8, what);
    std::memcpy(out.data(), bytes_.data() + pos_, out.size() * 8);
    pos_ += out.size() * 8;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::TruncatedPayload, std::string("model file ends inside ") + what);
  }
  std::string_view bytes_;
  std::size_t pos_ = kModelMagic.size();
};

}  // namespace

std::string encode_model(const ConvNetParams& params) {
  std::string out(kModelMagic);
  append_u32(out, kModelVersion);
  const auto shapes = shape_table(params);
  append_u32(out, static_cast<std::uint32_t>(shapes.size()));
  for (const auto& s : shapes) {
    append_u32(out, static_cast<std::uint32_t>(s.size()));
    for (auto d : s) append_u32(out, d);
  }
  for (const auto& t : params.tensors()) {
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  return out;
}

ConvNetParams decode_model(std::string_view bytes) {
  if (bytes.size() < kModelMagic.size() || bytes.substr(0, kModelMagic.size()) != kModelMagic) {
    throw Error(ErrorCode::BadMagic, "model file magic is not DWRMODEL");
  }
  Reader r(bytes);
  const auto version = r.u32("version");
  if (version != kModelVersion) throw Error(ErrorCode::ParseError, "unsupported model version " + std::to_string(version));

  ConvNetParams params;
  const auto expected = shape_table(params);
  const auto count = r.u32("tensor count");
  if (count != expected.size()) {
    throw Error(ErrorCode::ShapeMismatch, "model has " + std::to_string(count) + " tensors, expected 6");
  }
  for (std::size_t t = 0; t < expected.size(); ++t) {
    const auto rank = r.u32("shape table");
    if (rank != expected[t].size()) throw Error(ErrorCode::ShapeMismatch, "tensor " + std::to_string(t) + " rank differs");
    for (std::size_t k = 0; k < rank; ++k) {
      if (r.u32("shape table") != expected[t][k]) {
        throw Error(ErrorCode::ShapeMismatch, "tensor " + std::to_string(t) + " extent differs");
      }
    }
  }
  for (auto t : params.tensors()) r.doubles(t, "payload");
  return params;
}

void save_model(const ConvNetParams& params, const std::filesystem::path& path) {
  atomic_write_file(path, encode_model(params));
}

ConvNetParams load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace dwiratio
