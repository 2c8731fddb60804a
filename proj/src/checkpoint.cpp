// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint format, all integers little-endian:
//   "AVF1" | u32 version | u64 meta_len | meta JSON (UTF-8)
//   | u32 tensor_count | { u32 name_len | name | u64 rows | u64 cols
//   | rows*cols f64 } ... | u32 crc32 over everything before this field

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "averify/error.hpp"
#include "averify/verifier.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace averify::verifier {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'A', 'V', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::string& buf, const void* p, std::size_t n) {
  buf.append(static_cast<const char*>(p), n);
}

template <class T>
void put_scalar(std::string& buf, T v) {
  put_bytes(buf, &v, sizeof(v));
}

void put_tensor(std::string& buf, const std::string& name, const Tensor2& t) {
  put_scalar<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
  put_bytes(buf, name.data(), name.size());
  put_scalar<std::uint64_t>(buf, t.rows);
  put_scalar<std::uint64_t>(buf, t.cols);
  put_bytes(buf, t.data.data(), t.data.size() * sizeof(double));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw ValidationError("checkpoint file truncated");
  }
  void read_bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  template <class T>
  T read_scalar() {
    T v;
    read_bytes(&v, sizeof(v));
    return v;
  }
  std::string read_string(std::size_t n) {
    need(n);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
};

json tokenizer_to_json(const text::TokenizerConfig& t) {
  return {{"lowercase", t.lowercase},
          {"url_policy",
           t.url_policy == text::SentinelPolicy::kReplace ? "replace" : "keep"},
          {"mention_policy",
           t.mention_policy == text::SentinelPolicy::kReplace ? "replace" : "keep"},
          {"max_tokens", t.max_tokens}};
}

text::TokenizerConfig tokenizer_from_json(const json& j) {
  text::TokenizerConfig t;
  t.lowercase = j.at("lowercase").get<bool>();
  t.url_policy = j.at("url_policy").get<std::string>() == "keep"
                     ? text::SentinelPolicy::kKeep
                     : text::SentinelPolicy::kReplace;
  t.mention_policy = j.at("mention_policy").get<std::string>() == "keep"
                         ? text::SentinelPolicy::kKeep
                         : text::SentinelPolicy::kReplace;
  t.max_tokens = j.at("max_tokens").get<std::size_t>();
  return t;
}

}  // namespace

void save_checkpoint(const VerifierModel& model,
                     const std::filesystem::path& path) {
  const VerifierConfig& c = model.config;
  json meta;
  meta["config"] = {{"embedding_dim", c.embedding_dim},
                    {"hidden_dim", c.hidden_dim},
                    {"merge_hidden", c.merge_hidden},
                    {"epochs", c.epochs},
                    {"batch_size", c.batch_size},
                    {"lr", c.lr},
                    {"seed", c.seed},
                    {"embeddings_trainable", c.embeddings_trainable},
                    {"ordered_concat", c.ordered_concat},
                    {"tokenizer", tokenizer_to_json(c.tokenizer)}};
  meta["dims"] = {{"vocab_size", model.embedding.vectors.rows},
                  {"embedding_dim", c.embedding_dim},
                  {"hidden_dim", c.hidden_dim},
                  {"merge_input", c.merge_input_dim()},
                  {"merge_hidden", c.merge_hidden}};
  meta["gate_order"] = nn::kGateOrder;
  meta["vocab_checksum"] = model.vocab_checksum;
  meta["embedding_source"] =
      std::string(text::embedding_source_name(model.embedding.source));
  meta["float_format"] = "f64-le";
  const std::string meta_bytes = meta.dump();

  std::string buf;
  put_bytes(buf, kMagic, sizeof(kMagic));
  put_scalar<std::uint32_t>(buf, kVersion);
  put_scalar<std::uint64_t>(buf, meta_bytes.size());
  put_bytes(buf, meta_bytes.data(), meta_bytes.size());

  put_scalar<std::uint32_t>(buf, 8);
  put_tensor(buf, "embedding", model.embedding.vectors);
  put_tensor(buf, "encoder.w_input", model.encoder.w_input);
  put_tensor(buf, "encoder.w_recur", model.encoder.w_recur);
  put_tensor(buf, "encoder.bias", model.encoder.bias);
  put_tensor(buf, "merge.weight", model.merge_layer.weight);
  put_tensor(buf, "merge.bias", model.merge_layer.bias);
  put_tensor(buf, "output.weight", model.output_layer.weight);
  put_tensor(buf, "output.bias", model.output_layer.bias);

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()),
              static_cast<uInt>(buf.size()));
  put_scalar<std::uint32_t>(buf, static_cast<std::uint32_t>(crc));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ValidationError("short write to checkpoint: " + path.string());
}

VerifierModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(kMagic) + sizeof(std::uint32_t) * 2)
    throw ValidationError("checkpoint file truncated");
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("not a checkpoint file (bad magic)");

  // Whole-file checksum before trusting any content.
  const std::size_t body = buf.size() - sizeof(std::uint32_t);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + body, sizeof(stored_crc));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()),
              static_cast<uInt>(body));
  if (static_cast<std::uint32_t>(crc) != stored_crc)
    throw ValidationError("checkpoint checksum mismatch (corrupted file)");

  Reader r{buf, sizeof(kMagic)};
  const auto version = r.read_scalar<std::uint32_t>();
  if (version != kVersion)
    throw ValidationError("unsupported checkpoint version " +
                          std::to_string(version));

  const auto meta_len = r.read_scalar<std::uint64_t>();
  json meta;
  try {
    meta = json::parse(r.read_string(meta_len));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("checkpoint metadata is not valid JSON: ") +
                          e.what());
  }

  VerifierModel model;
  try {
    const json& jc = meta.at("config");
    VerifierConfig c;
    c.embedding_dim = jc.at("embedding_dim").get<std::size_t>();
    c.hidden_dim = jc.at("hidden_dim").get<std::size_t>();
    c.merge_hidden = jc.at("merge_hidden").get<std::size_t>();
    c.epochs = jc.at("epochs").get<std::size_t>();
    c.batch_size = jc.at("batch_size").get<std::size_t>();
    c.lr = jc.at("lr").get<double>();
    c.seed = jc.at("seed").get<std::uint64_t>();
    c.embeddings_trainable = jc.at("embeddings_trainable").get<bool>();
    c.ordered_concat = jc.at("ordered_concat").get<bool>();
    c.tokenizer = tokenizer_from_json(jc.at("tokenizer"));
    model.config = c;
    model.vocab_checksum = meta.at("vocab_checksum").get<std::uint32_t>();
    model.embedding.source = text::embedding_source_from_name(
        meta.at("embedding_source").get<std::string>());
    if (meta.at("gate_order").get<std::string>() != nn::kGateOrder)
      throw ValidationError("checkpoint gate order mismatch");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint metadata incomplete: ") +
                          e.what());
  }

  const auto tensor_count = r.read_scalar<std::uint32_t>();
  std::vector<std::pair<std::string, Tensor2>> tensors;
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    const auto name_len = r.read_scalar<std::uint32_t>();
    std::string name = r.read_string(name_len);
    Tensor2 t;
    t.rows = r.read_scalar<std::uint64_t>();
    t.cols = r.read_scalar<std::uint64_t>();
    t.data.resize(t.rows * t.cols);
    r.read_bytes(t.data.data(), t.data.size() * sizeof(double));
    tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos != body)
    throw ValidationError("checkpoint has trailing bytes before checksum");

  const auto take = [&](const char* name) -> Tensor2 {
    for (auto& [n, t] : tensors)
      if (n == name) return std::move(t);
    throw ValidationError(std::string("checkpoint missing tensor '") + name + "'");
  };

  const VerifierConfig& c = model.config;
  model.embedding.vectors = take("embedding");
  model.embedding.dim = c.embedding_dim;
  model.embedding.trainable = c.embeddings_trainable;
  model.encoder.input_dim = c.embedding_dim;
  model.encoder.hidden_dim = c.hidden_dim;
  model.encoder.w_input = take("encoder.w_input");
  model.encoder.w_recur = take("encoder.w_recur");
  model.encoder.bias = take("encoder.bias");
  model.merge_layer.weight = take("merge.weight");
  model.merge_layer.bias = take("merge.bias");
  model.merge_layer.activation = nn::Activation::kTanh;
  model.output_layer.weight = take("output.weight");
  model.output_layer.bias = take("output.bias");
  model.output_layer.activation = nn::Activation::kSigmoid;

  const auto check_shape = [&](const Tensor2& t, std::size_t rows,
                               std::size_t cols, const char* what) {
    if (t.rows != rows || t.cols != cols)
      throw ValidationError(std::string("checkpoint tensor '") + what +
                            "' has unexpected shape");
  };
  check_shape(model.embedding.vectors,
              meta.at("dims").at("vocab_size").get<std::size_t>(),
              c.embedding_dim, "embedding");
  check_shape(model.encoder.w_input, 4 * c.hidden_dim, c.embedding_dim,
              "encoder.w_input");
  check_shape(model.encoder.w_recur, 4 * c.hidden_dim, c.hidden_dim,
              "encoder.w_recur");
  check_shape(model.encoder.bias, 1, 4 * c.hidden_dim, "encoder.bias");
  check_shape(model.merge_layer.weight, c.merge_hidden, c.merge_input_dim(),
              "merge.weight");
  check_shape(model.merge_layer.bias, 1, c.merge_hidden, "merge.bias");
  check_shape(model.output_layer.weight, 1, c.merge_hidden, "output.weight");
  check_shape(model.output_layer.bias, 1, 1, "output.bias");

  return model;
}

VerifierModel load_checkpoint(const std::filesystem::path& path,
                              const text::Vocabulary& vocab) {
  VerifierModel model = load_checkpoint(path);
  if (vocab.checksum() != model.vocab_checksum)
    throw ValidationError(
        "vocabulary checksum mismatch: this checkpoint was trained with a "
        "different vocabulary file");
  if (vocab.size() != model.embedding.vectors.rows)
    throw ValidationError("vocabulary size does not match checkpoint embedding");
  model.vocab = vocab;
  return model;
}

}  // namespace averify::verifier
