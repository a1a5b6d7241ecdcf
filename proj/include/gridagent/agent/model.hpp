#pragma once

// Agent model assembly. The factorized agent runs two streams over shared
// visual features: a perception stream that predicts the interaction target
// class and a policy stream that predicts the next action. Ablation variants
// collapse the streams, swap the class head for a deconvolution mask head,
// replace dynamic filters with mean pooling, or zero inputs at inference.

#include <memory>

#include "gridagent/agent/dynamic_filters.hpp"
#include "gridagent/agent/encoders.hpp"
#include "gridagent/agent/policy.hpp"
#include "gridagent/expert.hpp"

namespace gridagent {

enum class StreamLanguage : int { Goal = 0, Instructions = 1, Both = 2 };
const char* stream_language_name(StreamLanguage s);
StreamLanguage stream_language_from_name(const std::string& name);

struct ModelDims {
    int token_embed = 32;
    int lang_hidden = 32;  // L; token features are 2L wide
    int action_embed = 16;
    int visual_features = 32;  // F
    int decoder_hidden = 64;
    int n_dynamic_filters = 8;   // N_DF (unstated upstream; tunable)
    int filter_kernel = 1;       // k
    int mask_head_channels = 16;

    json to_json() const;
    static ModelDims from_json(const json& j);
};

struct ModelConfig {
    // architecture flags (the ablation grid toggles these)
    bool factorized = true;           // two streams vs a single shared decoder
    bool ocl = true;                  // class prediction + association vs mask head
    bool dynamic_filters = true;      // language-generated kernels vs mean pooling
    bool augmentation = true;         // trajectory augmentation during training
    bool evasion = true;              // obstruction evasion at inference
    bool instance_association = true; // two-way rule vs random instance
    StreamLanguage ipm_language = StreamLanguage::Goal;
    StreamLanguage apm_language = StreamLanguage::Instructions;

    // inference-time input ablations
    bool zero_vision = false;
    bool withhold_goal = false;
    bool withhold_instructions = false;

    EvasionConfig evasion_config;
    ModelDims dims;
    uint64_t seed = 0;

    // training hyperparameters
    double learning_rate = 1e-3;
    int epochs = 30;
    int batch_size = 16;
    double dropout = 0.2;
    double class_loss_weight = 1.0;

    json to_json() const;
    static ModelConfig from_json(const json& j);
};

class Model {
public:
    Model(const ModelConfig& config, const Vocabulary& vocab,
          const WorldSpec& spec = WorldSpec::standard());

    void save(const std::filesystem::path& path) const;
    static std::unique_ptr<Model> load(const std::filesystem::path& path,
                                       const WorldSpec& spec = WorldSpec::standard());

    const ModelConfig& config() const { return config_; }
    ModelConfig& mutable_config() { return config_; }
    nn::ParameterStore& params() { return params_; }
    const nn::ParameterStore& params() const { return params_; }
    uint64_t vocab_hash() const { return vocab_hash_; }
    int num_streams() const { return config_.factorized ? 2 : 1; }
    int feature_hw() const;  // spatial side of the visual feature map

    struct StepOutput {
        nn::Var action_logits;  // (13)
        nn::Var class_logits;   // (N_class) when ocl
        nn::Var mask_logits;    // (1, px, px) when !ocl
        nn::Var visual;         // v_t (F, h, w), pre-dropout
    };

    class EpisodeContext {
    public:
        nn::Graph& graph() { return graph_; }
        int step_index() const { return step_index_; }

    private:
        friend class Model;
        explicit EpisodeContext(bool training) : graph_(training) {}
        nn::Graph graph_;
        struct StreamRuntime {
            TokenFeatures tokens;
            nn::LstmState state;
        };
        std::vector<StreamRuntime> streams_;
        uint64_t dropout_seed_ = 0;
        int step_index_ = 0;
    };

    std::unique_ptr<EpisodeContext> begin_episode(const InstructionPair& language, bool training,
                                                  uint64_t dropout_seed);

    // One model step. `prev_action_row` is the executed (or teacher-forced)
    // previous action index, or kActionStartSentinel at the first step.
    StepOutput step(EpisodeContext& ctx, const Observation& obs, int prev_action_row);

private:
    struct Stream {
        LanguageEncoderParams lang;
        AttentionParams attn;
        DynamicFilterParams df;  // unused when !dynamic_filters
        nn::LstmParams decoder;
    };

    void build(Rng& rng, int vocab_size);
    void bind();
    std::vector<int> stream_token_ids(const InstructionPair& language, StreamLanguage which) const;
    nn::Var stream_features_masked(nn::Graph& g, const TokenFeatures& tokens, StreamLanguage which,
                                   const InstructionPair& language) const;
    nn::Var mask_head_forward(nn::Graph& g, nn::Var z);

    ModelConfig config_;
    const WorldSpec* spec_;
    uint64_t vocab_hash_ = 0;
    int vocab_size_ = 0;
    nn::ParameterStore params_;

    VisualEncoderParams visual_;
    ActionEmbeddingParams action_embed_;
    std::vector<Stream> streams_;
    nn::LinearParams class_head_;   // ocl
    nn::LinearParams mask_fc_;      // !ocl
    nn::Parameter* deconv1_w_ = nullptr;
    nn::Parameter* deconv1_b_ = nullptr;
    nn::Parameter* deconv2_w_ = nullptr;
    nn::Parameter* deconv2_b_ = nullptr;
    nn::LinearParams action_head_;

    Model(ModelConfig cfg, const WorldSpec& spec)
        : config_(std::move(cfg)), spec_(&spec) {}
};

}  // namespace gridagent
