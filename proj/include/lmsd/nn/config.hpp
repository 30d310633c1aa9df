#pragma once

#include "lmsd/core/tensor.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace lmsd::nn {

struct TokenizerConfig {
  int patch_len = 4;    // p
  int token_dim = 128;  // d_tok
  int conv_kernel = 3;  // width of the stride-1 shape convolution
  bool positional = true;

  void validate() const {
    require(patch_len >= 1, "tokenizer: patch_len must be >= 1");
    require(token_dim >= 4, "tokenizer: token_dim must be >= 4");
    require(conv_kernel >= 1, "tokenizer: conv_kernel must be >= 1");
  }
};

enum class AttentionMode { global, sliding_window };

struct AttentionConfig {
  int layers = 2;  // L_e
  int heads = 4;   // n_h
  int ffn_dim = 512;
  double dropout = 0.01;
  AttentionMode mode = AttentionMode::global;
  int window = 4;  // half-width in tokens, sliding mode only
  int qkv_kernel = 3;  // width of the Q/K/V projection convolutions

  void validate(int token_dim) const {
    require(layers >= 1, "attention: layers must be >= 1");
    require(heads >= 1 && token_dim % heads == 0, "attention: token_dim must be divisible by heads");
    require(ffn_dim >= 1, "attention: ffn_dim must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "attention: dropout must be in [0, 1)");
    require(window >= 0, "attention: window half-width must be >= 0");
    require(qkv_kernel >= 1 && qkv_kernel % 2 == 1, "attention: qkv_kernel must be odd and positive");
  }
};

struct MMKConfig {
  int blocks = 4;      // N_L
  int filters = 256;   // F, per kernel
  std::vector<int> kernels = {1, 3, 5};
  int bottleneck = 32;
  double dropout = 0.01;
  int residual_period = 3;
  int hidden_dim = 0;  // optional pre-head hidden width; 0 = none

  int block_channels() const { return static_cast<int>(kernels.size()) * filters; }
  int max_kernel() const {
    int m = 1;
    for (int k : kernels) m = std::max(m, k);
    return m;
  }
  /// 1 + N_L * (k_max - 1)
  int receptive_field() const { return 1 + blocks * (max_kernel() - 1); }

  void validate() const {
    require(blocks >= 1, "mmk: blocks must be >= 1");
    require(filters >= 1 && bottleneck >= 1, "mmk: filters and bottleneck must be >= 1");
    require(!kernels.empty(), "mmk: kernel set must not be empty");
    for (int k : kernels) require(k >= 1 && k % 2 == 1, "mmk: kernels must be odd and positive");
    require(residual_period >= 1, "mmk: residual_period must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "mmk: dropout must be in [0, 1)");
    require(hidden_dim >= 0, "mmk: hidden_dim must be >= 0");
  }
};

enum class BackboneKind { convtok, mmk };

inline const char* to_string(BackboneKind k) { return k == BackboneKind::convtok ? "convtok" : "mmk"; }

struct ModelConfig {
  BackboneKind kind = BackboneKind::convtok;
  int input_len = 2048;
  int input_dim = 23;
  int head_dim = 2;
  TokenizerConfig tokenizer;
  AttentionConfig attention;
  MMKConfig mmk;
  std::uint64_t init_seed = 0;

  void validate() const {
    require(input_len >= 1 && input_dim >= 1, "model: input shape must be positive");
    require(head_dim >= 1, "model: head_dim must be >= 1");
    if (kind == BackboneKind::convtok) {
      tokenizer.validate();
      attention.validate(tokenizer.token_dim);
    } else {
      mmk.validate();
    }
  }

  // ---- presets at full scale ----

  static ModelConfig convtok(int L, int D, int head, int layers, int d_tok, int d_ff, AttentionMode mode = AttentionMode::global) {
    ModelConfig c;
    c.kind = BackboneKind::convtok;
    c.input_len = L;
    c.input_dim = D;
    c.head_dim = head;
    c.tokenizer.patch_len = 4;
    c.tokenizer.token_dim = d_tok;
    c.attention.layers = layers;
    c.attention.heads = 4;
    c.attention.ffn_dim = d_ff;
    c.attention.dropout = 0.01;
    c.attention.mode = mode;
    c.attention.window = 4;
    return c;
  }
  /// ConvTokMHSA, AD column: p=4, L_e=2, n_h=4, d_ff=512, d_tok=128.
  static ModelConfig convtok_ad(int L = 2048, int D = 23, int head = 2) { return convtok(L, D, head, 2, 128, 512); }
  /// ConvTokMHSA, FC/Diagnosis column: p=4, L_e=4, n_h=4, d_ff=1024, d_tok=512.
  static ModelConfig convtok_fc(int L = 2048, int D = 23, int head = 36) { return convtok(L, D, head, 4, 512, 1024); }
  /// LMSD Health Analyzer: ConvTokMHSA with L_e=4, d_tok=512.
  static ModelConfig lmsd_health(int L = 2048, int D = 23) { return convtok(L, D, 2, 4, 512, 1024); }
  /// MMK Net: N_L=4, F=256, p_drop=0.01, d_h=2048.
  static ModelConfig mmk_net(int L = 2048, int D = 23, int head = 36) {
    ModelConfig c;
    c.kind = BackboneKind::mmk;
    c.input_len = L;
    c.input_dim = D;
    c.head_dim = head;
    c.mmk.blocks = 4;
    c.mmk.filters = 256;
    c.mmk.dropout = 0.01;
    c.mmk.hidden_dim = 2048;
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["input_len"] = input_len;
    j["input_dim"] = input_dim;
    j["head_dim"] = head_dim;
    j["init_seed"] = init_seed;
    if (kind == BackboneKind::convtok) {
      j["tokenizer"] = {{"patch_len", tokenizer.patch_len},
                        {"token_dim", tokenizer.token_dim},
                        {"conv_kernel", tokenizer.conv_kernel},
                        {"positional", tokenizer.positional}};
      j["attention"] = {{"layers", attention.layers},
                        {"heads", attention.heads},
                        {"ffn_dim", attention.ffn_dim},
                        {"dropout", attention.dropout},
                        {"mode", attention.mode == AttentionMode::global ? "global" : "sliding_window"},
                        {"window", attention.window},
                        {"qkv_kernel", attention.qkv_kernel}};
    } else {
      j["mmk"] = {{"blocks", mmk.blocks},         {"filters", mmk.filters},
                  {"kernels", mmk.kernels},       {"bottleneck", mmk.bottleneck},
                  {"dropout", mmk.dropout},       {"residual_period", mmk.residual_period},
                  {"hidden_dim", mmk.hidden_dim}};
    }
    return j;
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    const auto kind = j.value("kind", std::string("convtok"));
    require(kind == "convtok" || kind == "mmk", "model config: unknown kind '" + kind + "'");
    c.kind = kind == "convtok" ? BackboneKind::convtok : BackboneKind::mmk;
    c.input_len = j.value("input_len", c.input_len);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.init_seed = j.value("init_seed", c.init_seed);
    if (c.kind == BackboneKind::mmk) c = merge_mmk(c);
    if (j.contains("tokenizer")) {
      const auto& t = j["tokenizer"];
      c.tokenizer.patch_len = t.value("patch_len", c.tokenizer.patch_len);
      c.tokenizer.token_dim = t.value("token_dim", c.tokenizer.token_dim);
      c.tokenizer.conv_kernel = t.value("conv_kernel", c.tokenizer.conv_kernel);
      c.tokenizer.positional = t.value("positional", c.tokenizer.positional);
    }
    if (j.contains("attention")) {
      const auto& a = j["attention"];
      c.attention.layers = a.value("layers", c.attention.layers);
      c.attention.heads = a.value("heads", c.attention.heads);
      c.attention.ffn_dim = a.value("ffn_dim", c.attention.ffn_dim);
      c.attention.dropout = a.value("dropout", c.attention.dropout);
      const auto mode = a.value("mode", std::string("global"));
      require(mode == "global" || mode == "sliding_window", "attention: unknown mode '" + mode + "'");
      c.attention.mode = mode == "global" ? AttentionMode::global : AttentionMode::sliding_window;
      c.attention.window = a.value("window", c.attention.window);
      c.attention.qkv_kernel = a.value("qkv_kernel", c.attention.qkv_kernel);
    }
    if (j.contains("mmk")) {
      const auto& m = j["mmk"];
      c.mmk.blocks = m.value("blocks", c.mmk.blocks);
      c.mmk.filters = m.value("filters", c.mmk.filters);
      c.mmk.kernels = m.value("kernels", c.mmk.kernels);
      c.mmk.bottleneck = m.value("bottleneck", c.mmk.bottleneck);
      c.mmk.dropout = m.value("dropout", c.mmk.dropout);
      c.mmk.residual_period = m.value("residual_period", c.mmk.residual_period);
      c.mmk.hidden_dim = m.value("hidden_dim", c.mmk.hidden_dim);
    }
    c.validate();
    return c;
  }

 private:
  static ModelConfig merge_mmk(ModelConfig c) {
    const auto preset = mmk_net(c.input_len, c.input_dim, c.head_dim);
    c.mmk = preset.mmk;
    return c;
  }
};

}  // namespace lmsd::nn
