#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gridagent/agent/encoders.hpp"
#include "test_helpers.hpp"

using namespace gridagent;
using namespace gridagent::nn;
using gridagent::testing::simple_layout;

namespace {

LanguageEncoderParams make_encoder(ParameterStore& store, Rng& rng, const std::string& prefix = "enc") {
    return LanguageEncoderParams::create(store, prefix, 12, 4, 4, rng);
}

std::vector<double> feats_of(const LanguageEncoderParams& enc, const std::vector<int>& ids) {
    Graph g;
    TokenFeatures tf = encode_language(g, enc, ids);
    return g.value(tf.features).data;
}

}  // namespace

TEST_CASE("language features have one row per token and are deterministic") {
    ParameterStore store;
    Rng rng(3);
    auto enc = make_encoder(store, rng);
    Graph g;
    TokenFeatures tf = encode_language(g, enc, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(g.value(tf.features).shape == std::vector<int>{9, 8});  // 2L = 8
    CHECK(feats_of(enc, {3, 1, 4}) == feats_of(enc, {3, 1, 4}));
}

TEST_CASE("the bidirectional encoder is order sensitive") {
    ParameterStore store;
    Rng rng(4);
    auto enc = make_encoder(store, rng);
    auto fwd = feats_of(enc, {1, 2, 3, 4, 5});
    auto rev = feats_of(enc, {5, 4, 3, 2, 1});
    CHECK(fwd != rev);
}

TEST_CASE("out-of-vocabulary ids are rejected") {
    ParameterStore store;
    Rng rng(5);
    auto enc = make_encoder(store, rng);
    Graph g;
    CHECK_THROWS_AS(encode_language(g, enc, {0, 12}), std::invalid_argument);
    CHECK_THROWS_AS(encode_language(g, enc, {-1}), std::invalid_argument);
    CHECK_THROWS_AS(encode_language(g, enc, {}), std::invalid_argument);
}

TEST_CASE("attention puts full weight on a single token") {
    ParameterStore store;
    Rng rng(6);
    auto enc = make_encoder(store, rng);
    auto attn = AttentionParams::create(store, "attn", 4, 8, rng);
    Graph g;
    TokenFeatures tf = encode_language(g, enc, {7});
    Var query = g.input(Tensor::zeros({4}));
    AttendedLanguage att = attend(g, attn, tf, query);
    CHECK(g.value(att.weights).data[0] == doctest::Approx(1.0));
    CHECK(g.value(att.vector).data == g.value(tf.features).data);
}

TEST_CASE("attention over equal rows is uniform and sums to one") {
    ParameterStore store;
    Rng rng(7);
    auto attn = AttentionParams::create(store, "attn", 4, 6, rng);
    Graph g;
    // four identical rows
    Tensor rows = Tensor::zeros({4, 6});
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c) rows.data[r * 6 + c] = 0.3 * c;
    TokenFeatures tf;
    tf.features = g.input(rows);
    tf.valid.assign(4, 1);
    Var query = g.input(Tensor({4}, {0.5, -0.2, 0.1, 0.9}));
    AttendedLanguage att = attend(g, attn, tf, query);
    for (double w : g.value(att.weights).data) CHECK(w == doctest::Approx(0.25));

    // random rows: weights still sum to one and padding gets zero
    Rng rr(8);
    Tensor rows2 = Tensor::zeros({5, 6});
    for (auto& v : rows2.data) v = rr.next_double(-1, 1);
    TokenFeatures tf2;
    tf2.features = g.input(rows2);
    tf2.valid = {1, 1, 1, 1, 0};
    AttendedLanguage att2 = attend(g, attn, tf2, query);
    double sum = 0;
    for (double w : g.value(att2.weights).data) {
        CHECK(w >= 0.0);
        sum += w;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
    CHECK(g.value(att2.weights).data[4] == 0.0);
}

TEST_CASE("frame encoder maps 28x28 to 7x7 with stride schedule 2,2,1") {
    ParameterStore store;
    Rng rng(9);
    const WorldSpec& spec = WorldSpec::standard();
    auto vis = VisualEncoderParams::create(store, "visual", spec.channels(), 32, rng);

    EpisodeState s = reset(simple_layout(), testing::pick_and_place_goal(), {5, 6, Heading::North, 0});
    Observation obs = render(s);
    Graph g;
    Var v = encode_frame(g, vis, obs);
    CHECK(g.value(v).shape == std::vector<int>{32, 7, 7});

    // pure function of the input: same observation, same features
    Graph g2;
    Var v2 = encode_frame(g2, vis, obs);
    CHECK(g.value(v).data == g2.value(v2).data);

    // blocked-move pair renders identically, so feature distance is exactly 0
    EpisodeState blocked = reset(simple_layout(), testing::pick_and_place_goal(),
                                 {1, 1, Heading::West, 0});
    Observation before = render(blocked);
    CHECK(step(blocked, {ActionTag::MoveAhead, {}}) == StepEvent::Blocked);
    Observation after = render(blocked);
    Graph g3;
    double dist = 0;
    const auto fa = g3.value(encode_frame(g3, vis, before)).data;
    const auto fb = g3.value(encode_frame(g3, vis, after)).data;
    for (size_t i = 0; i < fa.size(); ++i) dist += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    CHECK(dist == 0.0);

    // channel mismatch is rejected
    Observation bad = obs;
    bad.channels -= 1;
    bad.data.resize(static_cast<size_t>(bad.channels) * bad.height * bad.width);
    Graph g4;
    CHECK_THROWS_AS(encode_frame(g4, vis, bad), std::invalid_argument);
}

TEST_CASE("action embedding table has 14 rows and is consistent") {
    ParameterStore store;
    Rng rng(10);
    auto emb = ActionEmbeddingParams::create(store, "action_embed", 16, rng);
    CHECK(emb.table->value.shape == std::vector<int>{kNumActions + 1, 16});
    Graph g;
    Var a = embed_action(g, emb, static_cast<int>(ActionTag::Pickup));
    Var b = embed_action(g, emb, static_cast<int>(ActionTag::Pickup));
    Var c = embed_action(g, emb, kActionStartSentinel);
    CHECK(g.value(a).data == g.value(b).data);
    CHECK(g.value(a).data != g.value(c).data);
}

TEST_CASE("encoder gradients match finite differences on a tiny instance") {
    ParameterStore store;
    Rng rng(11);
    auto enc = LanguageEncoderParams::create(store, "enc", 6, 3, 3, rng);
    auto attn = AttentionParams::create(store, "attn", 3, 6, rng);
    const std::vector<int> ids = {1, 4, 2};

    auto build = [&](Graph& g) {
        TokenFeatures tf = encode_language(g, enc, ids);
        Var query = g.input(Tensor({3}, {0.2, -0.4, 0.6}));
        AttendedLanguage att = attend(g, attn, tf, query);
        return g.cross_entropy_logits(att.vector, 2);
    };
    store.zero_grads();
    double base;
    {
        Graph g;
        Var l = build(g);
        g.backward(l);
        g.accumulate_param_grads();
        base = g.value(l).data[0];
    }
    (void)base;
    const double h = 1e-5;
    for (const auto& p : store.all()) {
        for (size_t i = 0; i < p->value.data.size(); i += 3) {  // sample every third element
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            Graph gu;
            const double up = gu.value(build(gu)).data[0];
            p->value.data[i] = saved - h;
            Graph gd;
            const double down = gd.value(build(gd)).data[0];
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double analytic = p->grad.data[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            REQUIRE(std::abs(numeric - analytic) / denom < 1e-4);
        }
    }
}
