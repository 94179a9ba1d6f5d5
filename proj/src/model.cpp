// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/model.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "darter/config.hpp"
#include "darter/errors.hpp"

namespace darter {

ModelConfig ModelConfig::FullScale() {
  ModelConfig c;
  c.search_size = 256;
  c.template_size = 128;
  c.patch_size = 16;
  c.encoder.depth = 12;
  c.encoder.width = 768;
  c.encoder.heads = 12;
  return c;
}

void ModelConfig::Validate() const {
  encoder.Validate();
  try {
    PatchGrid::Make(search_size, patch_size);
    PatchGrid::Make(template_size, patch_size);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, e.what());
  }
  for (double s : normalization.stddev) {
    if (!(s > 0.0)) throw Error(ErrorKind::kConfig, "normalization stddev must be positive");
  }
}

bool SameArchitecture(const ModelConfig& a, const ModelConfig& b) {
  return a.search_size == b.search_size &&
         a.template_size == b.template_size &&
         a.patch_size == b.patch_size && a.encoder.depth == b.encoder.depth &&
         a.encoder.width == b.encoder.width &&
         a.encoder.heads == b.encoder.heads &&
         a.encoder.mlp_ratio == b.encoder.mlp_ratio;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.Validate();
  search_grid_ = PatchGrid::Make(config_.search_size, config_.patch_size);
  template_grid_ = PatchGrid::Make(config_.template_size, config_.patch_size);
  layout_ = TokenLayout::Make(search_grid_, template_grid_);
  const EncoderConfig& enc = config_.encoder;

  Rng root(config_.seed);
  Rng embed_rng = root.Fork(1);
  Rng dfb_rng = root.Fork(2);
  Rng block_rng = root.Fork(3);
  Rng head_rng = root.Fork(4);
  embedding = PatchEmbedding(search_grid_, template_grid_, enc.width, embed_rng);
  dfb_initial = CrossAttentionParams("dfb.initial", enc.width, enc.heads, dfb_rng);
  dfb_overlapped =
      CrossAttentionParams("dfb.overlapped", enc.width, enc.heads, dfb_rng);
  for (int i = 0; i < enc.depth; ++i) {
    blocks.emplace_back("encoder.block" + std::to_string(i + 1), enc.width,
                        enc.heads, enc.mlp_ratio, block_rng);
  }
  gates = GateParams(layout_.total(), enc.width, enc.depth,
                     root.Fork(5).NextU64(), enc.beta);
  head = BoxHead(enc.width, head_rng);
}

void Model::VisitParameters(const nn::ParameterVisitor& fn) {
  embedding.Visit(fn);
  dfb_initial.Visit(fn);
  dfb_overlapped.Visit(fn);
  for (EncoderBlock& b : blocks) b.Visit(fn);
  gates.Visit(fn);
  head.Visit(fn);
}

std::vector<ad::Parameter*> Model::Parameters() {
  std::vector<ad::Parameter*> out;
  VisitParameters([&](ad::Parameter& p) { out.push_back(&p); });
  return out;
}

size_t Model::ParameterCount() {
  size_t n = 0;
  VisitParameters([&](ad::Parameter& p) { n += p.value.size(); });
  return n;
}

TemplateVars Model::FuseTemplates(ad::Tape& tape, ad::Var static_image,
                                  ad::Var dynamic_image) {
  ad::Var s_init = Embed(
      tape, GatherPatches(static_image, template_grid_, PatchKind::kInitial),
      embedding, Stream::kStaticInitial);
  ad::Var d_init = Embed(
      tape, GatherPatches(dynamic_image, template_grid_, PatchKind::kInitial),
      embedding, Stream::kDynamicInitial);
  ad::Var s_o = Embed(
      tape, GatherPatches(static_image, template_grid_, PatchKind::kOverlapped),
      embedding, Stream::kStaticOverlapped);
  ad::Var d_o = Embed(
      tape,
      GatherPatches(dynamic_image, template_grid_, PatchKind::kOverlapped),
      embedding, Stream::kDynamicOverlapped);
  TemplateVars out;
  if (config_.encoder.ablate_dfb) {
    const std::array<ad::Var, 2> init = {s_init, d_init};
    const std::array<ad::Var, 2> over = {s_o, d_o};
    out.initial = ad::ConcatRows(init);
    out.overlapped = ad::ConcatRows(over);
  } else {
    out.initial = Blend(tape, s_init, d_init, dfb_initial);
    out.overlapped = Blend(tape, s_o, d_o, dfb_overlapped);
  }
  return out;
}

ForwardVars Model::Forward(ad::Tape& tape, ad::Var search_image,
                           const TemplateVars& templates, GateMode mode) {
  ad::Var x_init = Embed(
      tape, GatherPatches(search_image, search_grid_, PatchKind::kInitial),
      embedding, Stream::kSearchInitial);
  ad::Var x_o = Embed(
      tape, GatherPatches(search_image, search_grid_, PatchKind::kOverlapped),
      embedding, Stream::kSearchOverlapped);
  if (templates.initial.rows() !=
          layout_.span(Segment::kTemplateFused).length ||
      templates.overlapped.rows() !=
          layout_.span(Segment::kTemplateOverlappedFused).length) {
    throw Error(ErrorKind::kShape, "template tokens do not match the layout");
  }
  const std::array<ad::Var, 4> parts = {x_init, x_o, templates.initial,
                                        templates.overlapped};
  ad::Var tokens = ad::ConcatRows(parts);
  EncodeResult enc = Encode(tape, tokens, blocks, gates, mode,
                            config_.encoder.beta);
  ForwardVars out;
  out.tokens = enc.tokens;
  out.search_tokens = ad::SliceRows(
      enc.tokens, 0, layout_.span(Segment::kSearchInitial).length);
  out.trace = std::move(enc.trace);
  return out;
}

ad::Matrix Model::PrepareImage(const Image& crop) const {
  return ImageToMatrix(Normalize(crop, config_.normalization));
}

TemplateTokens Model::ComputeTemplateTokens(const Image& static_crop,
                                            const Image& dynamic_crop) {
  ad::Tape tape(false);
  TemplateVars vars =
      FuseTemplates(tape, tape.Constant(PrepareImage(static_crop)),
                    tape.Constant(PrepareImage(dynamic_crop)));
  return {vars.initial.value(), vars.overlapped.value()};
}

Inference Model::Infer(const Image& search_crop,
                       const TemplateTokens& templates) {
  ad::Tape tape(false);
  TemplateVars vars{tape.Constant(templates.initial),
                    tape.Constant(templates.overlapped)};
  ForwardVars fwd = Forward(tape, tape.Constant(PrepareImage(search_crop)),
                            vars, InferenceGateMode());
  HeadVars head_vars =
      head(tape, fwd.search_tokens, 1, search_grid_.initial_grid(),
           /*training=*/false, /*update_running=*/false);
  return {ToHeadOutput(head_vars, 0), std::move(fwd.trace)};
}

GateMode Model::InferenceGateMode() const {
  return config_.encoder.ablate_dfa ? GateMode::kOff : GateMode::kHard;
}

namespace {

constexpr char kMagic[8] = {'D', 'A', 'R', 'T', 'E', 'R', 'C', 'K'};
constexpr uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void WritePod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorKind::kCheckpoint, "truncated checkpoint");
  return value;
}

// Every array stored in a checkpoint, in file order.
std::vector<std::pair<std::string, ad::Matrix*>> NamedArrays(Model& model) {
  std::vector<std::pair<std::string, ad::Matrix*>> arrays;
  model.VisitParameters(
      [&](ad::Parameter& p) { arrays.emplace_back(p.name, &p.value); });
  arrays.emplace_back("dfa.v", &model.gates.v);
  for (size_t i = 0; i < model.head.tower.size(); ++i) {
    const std::string name = "head.tower" + std::to_string(i) + ".bn";
    arrays.emplace_back(name + ".running_mean",
                        &model.head.tower[i].bn.running_mean);
    arrays.emplace_back(name + ".running_var",
                        &model.head.tower[i].bn.running_var);
  }
  return arrays;
}

}  // namespace

void SaveCheckpoint(const std::string& path, Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  WritePod<uint32_t>(out, kFormatVersion);
  const std::string config = ToJson(model.config()).dump();
  WritePod<uint64_t>(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  const auto arrays = NamedArrays(model);
  WritePod<uint32_t>(out, static_cast<uint32_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    WritePod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    WritePod<uint32_t>(out, static_cast<uint32_t>(m->rows()));
    WritePod<uint32_t>(out, static_cast<uint32_t>(m->cols()));
    out.write(reinterpret_cast<const char*>(m->data()),
              static_cast<std::streamsize>(m->size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path + "'");
}

Model LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::kCheckpoint, "'" + path + "' is not a checkpoint");
  }
  const uint32_t version = ReadPod<uint32_t>(in);
  if (version != kFormatVersion) {
    throw Error(ErrorKind::kCheckpoint,
                "unsupported checkpoint version " + std::to_string(version));
  }
  const uint64_t config_len = ReadPod<uint64_t>(in);
  std::string config_text(config_len, '\0');
  in.read(config_text.data(), static_cast<std::streamsize>(config_len));
  if (!in) throw Error(ErrorKind::kCheckpoint, "truncated checkpoint config");
  ModelConfig config;
  try {
    config = ModelConfigFromJson(nlohmann::json::parse(config_text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCheckpoint,
                std::string("corrupt checkpoint config: ") + e.what());
  }
  Model model(config);

  std::map<std::string, ad::Matrix*> expected;
  for (const auto& [name, m] : NamedArrays(model)) expected[name] = m;
  const uint32_t count = ReadPod<uint32_t>(in);
  if (count != expected.size()) {
    throw Error(ErrorKind::kCheckpoint, "checkpoint holds " +
                                            std::to_string(count) +
                                            " arrays, model expects " +
                                            std::to_string(expected.size()));
  }
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = ReadPod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t rows = ReadPod<uint32_t>(in);
    const uint32_t cols = ReadPod<uint32_t>(in);
    auto it = expected.find(name);
    if (it == expected.end()) {
      throw Error(ErrorKind::kCheckpoint, "unexpected array '" + name + "'");
    }
    ad::Matrix& m = *it->second;
    if (m.rows() != rows || m.cols() != cols) {
      throw Error(ErrorKind::kCheckpoint, "array '" + name + "' has shape " +
                                              std::to_string(rows) + "x" +
                                              std::to_string(cols));
    }
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw Error(ErrorKind::kCheckpoint, "truncated array '" + name + "'");
    expected.erase(it);
  }
  return model;
}

}  // namespace darter
