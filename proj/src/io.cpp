// Copyright 2026 The LDRF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ldrf/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ldrf/error.hpp"

namespace ldrf {

namespace {

using nlohmann::json;

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void floats(const std::vector<float>& v) {
    for (float f : v) f32(f);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }
  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) throw FormatError(pos_, "truncated file while reading " + what);
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32_at(std::size_t offset) const {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[offset + i]) << (8 * i);
    return std::bit_cast<float>(v);
  }
  void magic(const char (&expected)[5]) {
    need(4, "magic");
    if (std::memcmp(b_.data() + pos_, expected, 4) != 0)
      throw FormatError(pos_, std::string("bad magic, expected '") + expected + "'");
    pos_ += 4;
  }
  void skip(std::size_t n) { pos_ += n; }
  const std::uint8_t* data() const { return b_.data(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

struct NamedTensor {
  const char* name;
  std::vector<float> LayerSpec::*field;
};

constexpr NamedTensor kTensorFields[] = {
    {"weights", &LayerSpec::weights},
    {"bias", &LayerSpec::bias},
    {"running_mean", &LayerSpec::running_mean},
    {"running_var", &LayerSpec::running_var},
};

std::size_t expected_count(const LayerSpec& l, const std::string& tensor) {
  if (l.is_linear()) {
    if (tensor == "weights") return l.fan_in() * static_cast<std::size_t>(l.out);
    if (tensor == "bias") return static_cast<std::size_t>(l.out);
  }
  if (l.kind == LayerKind::kBatchNorm) return static_cast<std::size_t>(l.out);
  return 0;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Network& net) {
  json manifest;
  manifest["name"] = net.name;
  manifest["form"] = to_string(net.form);
  manifest["input"] = {net.input.c, net.input.h, net.input.w};
  json layers = json::array();
  std::uint64_t offset = 0;
  for (const auto& l : net.layers) {
    json jl;
    jl["name"] = l.name;
    jl["kind"] = to_string(l.kind);
    jl["k"] = l.k;
    jl["pad"] = l.pad;
    jl["stride"] = l.stride;
    jl["in"] = l.in;
    jl["out"] = l.out;
    jl["relu"] = l.relu;
    jl["flatten"] = l.flatten;
    if (l.kind == LayerKind::kBatchNorm) jl["eps"] = l.eps;
    json tensors = json::array();
    for (const auto& f : kTensorFields) {
      const auto& v = l.*f.field;
      if (v.empty()) continue;
      tensors.push_back({{"name", f.name}, {"offset", offset}, {"count", v.size()}});
      offset += v.size() * sizeof(float);
    }
    jl["tensors"] = std::move(tensors);
    layers.push_back(std::move(jl));
  }
  manifest["layers"] = std::move(layers);
  json masks = json::object();
  for (const auto& [name, m] : net.masks) masks[name] = m;
  manifest["masks"] = std::move(masks);
  manifest["info"] = net.info;
  manifest["blob_bytes"] = offset;

  const std::string text = manifest.dump();
  ByteWriter w;
  w.bytes("LDRF", 4);
  w.u32(kModelVersion);
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  for (const auto& l : net.layers)
    for (const auto& f : kTensorFields) w.floats(l.*f.field);
  return std::move(w.buffer());
}

Network decode_model(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.magic("LDRF");
  const std::size_t version_at = r.pos();
  const std::uint32_t version = r.u32("version");
  if (version != kModelVersion) throw FormatError(version_at, "unsupported model version " + std::to_string(version));
  const std::size_t len_at = r.pos();
  const std::uint64_t manifest_len = r.u64("manifest length");
  if (manifest_len > r.remaining()) throw FormatError(len_at, "manifest length exceeds file size");
  const std::size_t manifest_at = r.pos();
  json manifest;
  try {
    manifest = json::parse(r.data() + manifest_at, r.data() + manifest_at + manifest_len);
  } catch (const json::exception& e) {
    throw FormatError(manifest_at, std::string("malformed manifest: ") + e.what());
  }
  r.skip(manifest_len);
  const std::size_t blob_at = r.pos();
  const std::size_t blob_bytes = r.remaining();

  Network net;
  std::uint64_t consumed = 0;
  try {
    net.name = manifest.at("name").get<std::string>();
    net.form = net_form_from_string(manifest.at("form").get<std::string>());
    const auto& in = manifest.at("input");
    net.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
    for (const auto& jl : manifest.at("layers")) {
      LayerSpec l;
      l.name = jl.at("name").get<std::string>();
      l.kind = layer_kind_from_string(jl.at("kind").get<std::string>());
      l.k = jl.at("k").get<int>();
      l.pad = jl.at("pad").get<int>();
      l.stride = jl.at("stride").get<int>();
      l.in = jl.at("in").get<int>();
      l.out = jl.at("out").get<int>();
      l.relu = jl.at("relu").get<bool>();
      l.flatten = jl.at("flatten").get<bool>();
      if (jl.contains("eps")) l.eps = jl.at("eps").get<float>();
      if (l.in < 0 || l.out < 0 || l.k < 1 || l.stride < 1 || l.pad < 0)
        throw FormatError(manifest_at, "layer '" + l.name + "' has invalid geometry");
      for (const auto& jt : jl.at("tensors")) {
        const std::string tname = jt.at("name").get<std::string>();
        const std::uint64_t off = jt.at("offset").get<std::uint64_t>();
        const std::uint64_t count = jt.at("count").get<std::uint64_t>();
        const NamedTensor* field = nullptr;
        for (const auto& f : kTensorFields)
          if (tname == f.name) field = &f;
        if (!field) throw FormatError(manifest_at, "layer '" + l.name + "' has unknown tensor '" + tname + "'");
        const std::size_t want = expected_count(l, tname);
        if (count != want)
          throw FormatError(blob_at + off, "layer '" + l.name + "': tensor '" + tname + "' holds " +
                                               std::to_string(count) + " values but its channel counts require " +
                                               std::to_string(want));
        if (off != consumed || off + count * sizeof(float) > blob_bytes)
          throw FormatError(blob_at + std::min<std::uint64_t>(off, blob_bytes),
                            "layer '" + l.name + "': tensor '" + tname + "' lies outside the weight blob");
        auto& dst = l.*(field->field);
        dst.resize(count);
        for (std::uint64_t i = 0; i < count; ++i) {
          const std::size_t at = blob_at + off + i * sizeof(float);
          dst[i] = r.f32_at(at);
          if (!std::isfinite(dst[i])) throw FormatError(at, "layer '" + l.name + "': non-finite weight");
        }
        consumed += count * sizeof(float);
      }
      net.layers.push_back(std::move(l));
    }
    if (manifest.contains("masks"))
      for (const auto& [name, m] : manifest.at("masks").items()) net.masks[name] = m.get<Mask>();
    if (manifest.contains("info")) net.info = manifest.at("info");
  } catch (const json::exception& e) {
    throw FormatError(manifest_at, std::string("malformed manifest: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(manifest_at, e.what());
  }
  if (consumed != blob_bytes)
    throw FormatError(blob_at + consumed, "weight blob has " + std::to_string(blob_bytes) + " bytes, manifest accounts for " +
                                              std::to_string(consumed));
  try {
    net.validate();
  } catch (const Error& e) {
    throw FormatError(manifest_at, std::string("inconsistent manifest: ") + e.what());
  }
  return net;
}

void save_model(const Network& net, const std::string& path) { write_file(path, encode_model(net)); }

Network load_model(const std::string& path) { return decode_model(read_file(path)); }

Dataset Dataset::subset(int begin, int count) const {
  Dataset out;
  out.images = images.slice(begin, count);
  out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  out.num_classes = num_classes;
  return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  require(ds.labels.size() == static_cast<std::size_t>(ds.images.n()), "dataset: label count mismatch");
  ByteWriter w;
  w.bytes("LDDS", 4);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.images.n()));
  w.u32(static_cast<std::uint32_t>(ds.images.c()));
  w.u32(static_cast<std::uint32_t>(ds.images.h()));
  w.u32(static_cast<std::uint32_t>(ds.images.w()));
  w.u32(ds.num_classes);
  w.floats(ds.images.data());
  for (auto l : ds.labels) w.u32(l);
  return std::move(w.buffer());
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.magic("LDDS");
  const std::size_t version_at = r.pos();
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion)
    throw FormatError(version_at, "unsupported dataset version " + std::to_string(version));
  const std::uint32_t n = r.u32("n"), c = r.u32("c"), h = r.u32("h"), w = r.u32("w");
  const std::size_t classes_at = r.pos();
  const std::uint32_t classes = r.u32("num_classes");
  if (classes < 1) throw FormatError(classes_at, "dataset declares zero classes");
  const std::uint64_t count = static_cast<std::uint64_t>(n) * c * h * w;
  const std::size_t data_at = r.pos();
  if (count > r.remaining() / 4) throw FormatError(r.pos(), "truncated image data");
  std::vector<float> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = r.f32_at(data_at + i * 4);
    if (!std::isfinite(data[i])) throw FormatError(data_at + i * 4, "non-finite pixel value");
  }
  r.skip(count * 4);
  const std::size_t labels_at = r.pos();
  if (static_cast<std::uint64_t>(n) * 4 != r.remaining())
    throw FormatError(labels_at, "label array has " + std::to_string(r.remaining()) + " bytes, expected " +
                                     std::to_string(static_cast<std::uint64_t>(n) * 4));
  Dataset ds;
  ds.num_classes = classes;
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = r.pos();
    ds.labels[i] = r.u32("label");
    if (ds.labels[i] >= classes)
      throw FormatError(at, "label at index " + std::to_string(i) + " is " + std::to_string(ds.labels[i]) +
                                " but the dataset has " + std::to_string(classes) + " classes");
  }
  ds.images = Tensor4(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h), static_cast<int>(w), std::move(data));
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) { write_file(path, encode_dataset(ds)); }

Dataset load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace ldrf
