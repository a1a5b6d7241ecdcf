#include "gridagent/agent/model.hpp"

#include <stdexcept>

namespace gridagent {

using nn::Graph;
using nn::Var;

const char* stream_language_name(StreamLanguage s) {
    static const char* names[] = {"goal", "instructions", "both"};
    return names[static_cast<int>(s)];
}

StreamLanguage stream_language_from_name(const std::string& name) {
    if (name == "goal") return StreamLanguage::Goal;
    if (name == "instructions") return StreamLanguage::Instructions;
    if (name == "both") return StreamLanguage::Both;
    throw std::invalid_argument("unknown stream language: " + name);
}

json ModelDims::to_json() const {
    return {{"token_embed", token_embed},
            {"lang_hidden", lang_hidden},
            {"action_embed", action_embed},
            {"visual_features", visual_features},
            {"decoder_hidden", decoder_hidden},
            {"n_dynamic_filters", n_dynamic_filters},
            {"filter_kernel", filter_kernel},
            {"mask_head_channels", mask_head_channels}};
}

ModelDims ModelDims::from_json(const json& j) {
    ModelDims d;
    d.token_embed = j.value("token_embed", d.token_embed);
    d.lang_hidden = j.value("lang_hidden", d.lang_hidden);
    d.action_embed = j.value("action_embed", d.action_embed);
    d.visual_features = j.value("visual_features", d.visual_features);
    d.decoder_hidden = j.value("decoder_hidden", d.decoder_hidden);
    d.n_dynamic_filters = j.value("n_dynamic_filters", d.n_dynamic_filters);
    d.filter_kernel = j.value("filter_kernel", d.filter_kernel);
    d.mask_head_channels = j.value("mask_head_channels", d.mask_head_channels);
    return d;
}

json ModelConfig::to_json() const {
    return {{"factorized", factorized},
            {"ocl", ocl},
            {"dynamic_filters", dynamic_filters},
            {"augmentation", augmentation},
            {"evasion", evasion},
            {"instance_association", instance_association},
            {"ipm_language", stream_language_name(ipm_language)},
            {"apm_language", stream_language_name(apm_language)},
            {"zero_vision", zero_vision},
            {"withhold_goal", withhold_goal},
            {"withhold_instructions", withhold_instructions},
            {"evasion_config", evasion_config.to_json()},
            {"dims", dims.to_json()},
            {"seed", seed},
            {"learning_rate", learning_rate},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"dropout", dropout},
            {"class_loss_weight", class_loss_weight}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    c.factorized = j.value("factorized", c.factorized);
    c.ocl = j.value("ocl", c.ocl);
    c.dynamic_filters = j.value("dynamic_filters", c.dynamic_filters);
    c.augmentation = j.value("augmentation", c.augmentation);
    c.evasion = j.value("evasion", c.evasion);
    c.instance_association = j.value("instance_association", c.instance_association);
    if (j.contains("ipm_language")) c.ipm_language = stream_language_from_name(j["ipm_language"]);
    if (j.contains("apm_language")) c.apm_language = stream_language_from_name(j["apm_language"]);
    c.zero_vision = j.value("zero_vision", c.zero_vision);
    c.withhold_goal = j.value("withhold_goal", c.withhold_goal);
    c.withhold_instructions = j.value("withhold_instructions", c.withhold_instructions);
    if (j.contains("evasion_config")) c.evasion_config = EvasionConfig::from_json(j["evasion_config"]);
    if (j.contains("dims")) c.dims = ModelDims::from_json(j["dims"]);
    c.seed = j.value("seed", c.seed);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.dropout = j.value("dropout", c.dropout);
    c.class_loss_weight = j.value("class_loss_weight", c.class_loss_weight);
    return c;
}

int Model::feature_hw() const {
    int px = spec_->obs_px();
    int o1 = (px + 2 - 3) / 2 + 1;
    int o2 = (o1 + 2 - 3) / 2 + 1;
    return o2;  // third conv has stride 1, padding 1, kernel 3
}

namespace {
std::string stream_prefix(bool factorized, int index) {
    if (!factorized) return "joint";
    return index == 0 ? "ipm" : "apm";
}
}  // namespace

Model::Model(const ModelConfig& config, const Vocabulary& vocab, const WorldSpec& spec)
    : config_(config), spec_(&spec) {
    vocab_hash_ = vocab.hash();
    vocab_size_ = static_cast<int>(vocab.tokens.size());
    Rng rng(derive_seed(config_.seed, "model-init"));
    build(rng, vocab_size_);
}

void Model::build(Rng& rng, int vocab_size) {
    const ModelDims& d = config_.dims;
    const int hw = feature_hw();
    const int lang_dim = 2 * d.lang_hidden;
    const int vhat_dim =
        config_.dynamic_filters ? d.n_dynamic_filters * hw * hw : d.visual_features;
    const int dec_in = vhat_dim + lang_dim + d.action_embed;

    visual_ = VisualEncoderParams::create(params_, "visual", spec_->channels(), d.visual_features, rng);
    action_embed_ = ActionEmbeddingParams::create(params_, "action_embed", d.action_embed, rng);

    const int n_streams = config_.factorized ? 2 : 1;
    for (int s = 0; s < n_streams; ++s) {
        const std::string prefix = stream_prefix(config_.factorized, s);
        Stream st;
        st.lang = LanguageEncoderParams::create(params_, prefix + ".lang", vocab_size, d.token_embed,
                                                d.lang_hidden, rng);
        st.attn = AttentionParams::create(params_, prefix + ".attn", d.decoder_hidden, lang_dim, rng);
        if (config_.dynamic_filters)
            st.df = DynamicFilterParams::create(params_, prefix + ".df", lang_dim,
                                                d.n_dynamic_filters, d.visual_features,
                                                d.filter_kernel, rng);
        st.decoder = nn::LstmParams::create(params_, prefix + ".dec", dec_in, d.decoder_hidden, rng);
        streams_.push_back(st);
    }

    if (config_.ocl) {
        class_head_ = nn::LinearParams::create(params_, "class_head", d.decoder_hidden,
                                               spec_->num_classes(), rng);
    } else {
        const int z_dim = dec_in + d.decoder_hidden;
        const int fm = d.mask_head_channels;
        mask_fc_ = nn::LinearParams::create(params_, "mask_head.fc", z_dim, fm * hw * hw, rng);
        const double bound1 = 1.0 / std::sqrt(static_cast<double>(fm) * 16);
        deconv1_w_ = &params_.create("mask_head.deconv1.w", {fm, fm / 2, 4, 4}, bound1, rng);
        deconv1_b_ = &params_.create("mask_head.deconv1.b", {fm / 2}, bound1, rng);
        const double bound2 = 1.0 / std::sqrt(static_cast<double>(fm / 2) * 16);
        deconv2_w_ = &params_.create("mask_head.deconv2.w", {fm / 2, 1, 4, 4}, bound2, rng);
        deconv2_b_ = &params_.create("mask_head.deconv2.b", {1}, bound2, rng);
    }

    action_head_ = nn::LinearParams::create(params_, "action_head", dec_in + d.decoder_hidden,
                                            kNumActions, rng);
}

void Model::bind() {
    const ModelDims& d = config_.dims;
    visual_ = VisualEncoderParams::bind(params_, "visual");
    action_embed_ = ActionEmbeddingParams::bind(params_, "action_embed");
    streams_.clear();
    const int n_streams = config_.factorized ? 2 : 1;
    for (int s = 0; s < n_streams; ++s) {
        const std::string prefix = stream_prefix(config_.factorized, s);
        Stream st;
        st.lang = LanguageEncoderParams::bind(params_, prefix + ".lang", d.lang_hidden);
        st.attn = AttentionParams::bind(params_, prefix + ".attn");
        if (config_.dynamic_filters)
            st.df = DynamicFilterParams::bind(params_, prefix + ".df", d.n_dynamic_filters,
                                              d.visual_features, d.filter_kernel);
        st.decoder = nn::LstmParams::bind(params_, prefix + ".dec", d.decoder_hidden);
        streams_.push_back(st);
    }
    if (config_.ocl) {
        class_head_ = nn::LinearParams::bind(params_, "class_head");
    } else {
        mask_fc_ = nn::LinearParams::bind(params_, "mask_head.fc");
        deconv1_w_ = params_.find("mask_head.deconv1.w");
        deconv1_b_ = params_.find("mask_head.deconv1.b");
        deconv2_w_ = params_.find("mask_head.deconv2.w");
        deconv2_b_ = params_.find("mask_head.deconv2.b");
        if (!deconv1_w_ || !deconv1_b_ || !deconv2_w_ || !deconv2_b_)
            throw std::runtime_error("missing mask head parameters");
    }
    action_head_ = nn::LinearParams::bind(params_, "action_head");
}

void Model::save(const std::filesystem::path& path) const {
    json extras;
    extras["model_config"] = config_.to_json();
    extras["vocab_hash"] = vocab_hash_;
    extras["vocab_size"] = vocab_size_;
    extras["channel_manifest"] = spec_->channel_manifest();
    params_.save(path, extras);
}

std::unique_ptr<Model> Model::load(const std::filesystem::path& path, const WorldSpec& spec) {
    auto model = std::unique_ptr<Model>(new Model(ModelConfig{}, spec));
    json extras = nn::ParameterStore::load(path, model->params_);
    model->config_ = ModelConfig::from_json(extras["model_config"]);
    model->vocab_hash_ = extras["vocab_hash"].get<uint64_t>();
    model->vocab_size_ = extras["vocab_size"].get<int>();
    model->bind();
    return model;
}

std::vector<int> Model::stream_token_ids(const InstructionPair& language, StreamLanguage which) const {
    std::vector<int> ids;
    if (which == StreamLanguage::Goal || which == StreamLanguage::Both)
        ids.insert(ids.end(), language.goal_ids.begin(), language.goal_ids.end());
    if (which == StreamLanguage::Instructions || which == StreamLanguage::Both)
        ids.insert(ids.end(), language.instr_ids.begin(), language.instr_ids.end());
    return ids;
}

// Zeroes token-feature rows of withheld language sources at inference.
Var Model::stream_features_masked(Graph& g, const TokenFeatures& tokens, StreamLanguage which,
                                  const InstructionPair& language) const {
    if (!config_.withhold_goal && !config_.withhold_instructions) return tokens.features;
    const nn::Tensor& feats = g.value(tokens.features);
    const int T = feats.dim(0), D = feats.dim(1);
    const int goal_len = (which == StreamLanguage::Instructions)
                             ? 0
                             : static_cast<int>(language.goal_ids.size());
    nn::Tensor mask = nn::Tensor::zeros({T, D});
    for (int t = 0; t < T; ++t) {
        const bool is_goal_row = t < goal_len;
        const bool keep = is_goal_row ? !config_.withhold_goal : !config_.withhold_instructions;
        if (keep)
            for (int i = 0; i < D; ++i) mask.data[static_cast<size_t>(t) * D + i] = 1.0;
    }
    return g.mul(tokens.features, g.input(std::move(mask)));
}

Var Model::mask_head_forward(Graph& g, Var z) {
    const int hw = feature_hw();
    const int fm = config_.dims.mask_head_channels;
    Var x = g.relu(apply_linear(g, mask_fc_, z));
    x = g.reshape(x, {fm, hw, hw});
    x = g.relu(g.conv_transpose2d(x, g.use(*deconv1_w_), g.use(*deconv1_b_), 2, 1));
    return g.conv_transpose2d(x, g.use(*deconv2_w_), g.use(*deconv2_b_), 2, 1);
}

std::unique_ptr<Model::EpisodeContext> Model::begin_episode(const InstructionPair& language,
                                                            bool training, uint64_t dropout_seed) {
    auto ctx = std::unique_ptr<EpisodeContext>(new EpisodeContext(training));
    ctx->dropout_seed_ = dropout_seed;
    Graph& g = ctx->graph_;
    const StreamLanguage which[2] = {config_.factorized ? config_.ipm_language : StreamLanguage::Both,
                                     config_.factorized ? config_.apm_language : StreamLanguage::Both};
    for (int s = 0; s < num_streams(); ++s) {
        EpisodeContext::StreamRuntime rt;
        std::vector<int> ids = stream_token_ids(language, which[s]);
        rt.tokens = encode_language(g, streams_[s].lang, ids);
        rt.tokens.features = stream_features_masked(g, rt.tokens, which[s], language);
        rt.state = nn::lstm_init(g, config_.dims.decoder_hidden);
        ctx->streams_.push_back(std::move(rt));
    }
    return ctx;
}

Model::StepOutput Model::step(EpisodeContext& ctx, const Observation& obs, int prev_action_row) {
    Graph& g = ctx.graph_;
    StepOutput out;

    Var v = encode_frame(g, visual_, obs);
    if (config_.zero_vision) v = g.scale(v, 0.0);
    out.visual = v;
    const uint64_t kd = derive_seed(ctx.dropout_seed_, "dropout", ctx.step_index_);
    Var v_drop = g.dropout(v, config_.dropout, kd);
    Var a_emb = embed_action(g, action_embed_, prev_action_row);

    std::vector<Var> vhat(num_streams()), xhat(num_streams());
    for (int s = 0; s < num_streams(); ++s) {
        auto& rt = ctx.streams_[s];
        AttendedLanguage att = attend(g, streams_[s].attn, rt.tokens, rt.state.h);
        xhat[s] = att.vector;
        if (config_.dynamic_filters) {
            Var bank = generate_bank(g, streams_[s].df, att.vector);
            vhat[s] = apply_bank(g, v_drop, bank);
        } else {
            vhat[s] = g.mean_pool_hw(v_drop);
        }
    }

    if (config_.factorized) {
        // perception stream
        Var in_m = g.concat({vhat[0], xhat[0], a_emb});
        ctx.streams_[0].state = nn::lstm_step(g, streams_[0].decoder, in_m, ctx.streams_[0].state);
        Var h_m = g.dropout(ctx.streams_[0].state.h, config_.dropout, kd ^ 0x1111);
        if (config_.ocl) {
            out.class_logits = apply_linear(g, class_head_, h_m);
        } else {
            Var z = g.concat({in_m, h_m});
            out.mask_logits = mask_head_forward(g, z);
        }
        // policy stream
        Var u_a = g.concat({vhat[1], xhat[1], a_emb});
        ctx.streams_[1].state = nn::lstm_step(g, streams_[1].decoder, u_a, ctx.streams_[1].state);
        Var h_a = g.dropout(ctx.streams_[1].state.h, config_.dropout, kd ^ 0x2222);
        out.action_logits = apply_linear(g, action_head_, g.concat({u_a, h_a}));
    } else {
        Var u = g.concat({vhat[0], xhat[0], a_emb});
        ctx.streams_[0].state = nn::lstm_step(g, streams_[0].decoder, u, ctx.streams_[0].state);
        Var h = g.dropout(ctx.streams_[0].state.h, config_.dropout, kd ^ 0x1111);
        if (config_.ocl) {
            out.class_logits = apply_linear(g, class_head_, h);
        } else {
            Var z = g.concat({u, h});
            out.mask_logits = mask_head_forward(g, z);
        }
        out.action_logits = apply_linear(g, action_head_, g.concat({u, h}));
    }

    ctx.step_index_ += 1;
    return out;
}

}  // namespace gridagent
