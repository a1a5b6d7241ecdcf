#include "gridagent/expert.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <deque>
#include <map>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gridagent/npy.hpp"

namespace gridagent {

const char* subgoal_kind_name(SubgoalKind k) {
    static const char* names[] = {"Goto", "Pickup", "Put", "Open", "Close", "Toggle", "Slice"};
    return names[static_cast<int>(k)];
}

// ---------------------------------------------------------------------------
// Language tables

namespace {

struct Syn {
    const char* a;
    const char* b;
};

constexpr Syn kGotoVerb{"go", "walk"};
constexpr Syn kPickupVerb{"take", "grab"};
constexpr Syn kPutVerb{"put", "place"};
constexpr Syn kOpenVerb{"open", "unlatch"};
constexpr Syn kCloseVerb{"close", "shut"};
constexpr Syn kToggleVerb{"toggle", "switch"};
constexpr Syn kSliceVerb{"slice", "cut"};
constexpr Syn kExamineVerb{"examine", "inspect"};
constexpr Syn kPrepIn{"in", "inside"};
constexpr Syn kPrepOn{"on", "onto"};

const std::map<std::string, Syn>& adjective_table() {
    static const std::map<std::string, Syn> table = {
        {"apple", {"red", "ripe"}},     {"bread", {"fresh", "brown"}},
        {"tomato", {"juicy", "round"}}, {"potato", {"raw", "dusty"}},
        {"knife", {"sharp", "steel"}},  {"cup", {"blue", "ceramic"}},
        {"plate", {"white", "clean"}},  {"book", {"thick", "old"}},
        {"candle", {"wax", "tall"}},    {"phone", {"black", "mobile"}},
        {"soap", {"green", "scented"}}, {"pencil", {"yellow", "short"}},
        {"table", {"wooden", "long"}},  {"counter", {"granite", "wide"}},
        {"drawer", {"narrow", "lower"}},{"cabinet", {"oak", "upper"}},
        {"fridge", {"cold", "silver"}}, {"lamp", {"bright", "desk"}},
    };
    return table;
}

const char* kGlue[] = {"the", "to", "two", "items", "and", "it", "under", "then"};

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

int Vocabulary::id(const std::string& token) const {
    for (size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == token) return static_cast<int>(i);
    return -1;
}

int Vocabulary::require_id(const std::string& token) const {
    int i = id(token);
    if (i < 0) throw std::invalid_argument("token not in vocabulary: " + token);
    return i;
}

uint64_t Vocabulary::hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : tokens) {
        h = fnv1a64(t, h);
        h = fnv1a64("\x1f", h);
    }
    return h;
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary vocab = [] {
        Vocabulary v;
        auto add = [&](const std::string& t) {
            if (v.id(t) < 0) v.tokens.push_back(t);
        };
        add("<pad>");
        for (const char* g : kGlue) add(g);
        for (const Syn* s : {&kGotoVerb, &kPickupVerb, &kPutVerb, &kOpenVerb, &kCloseVerb,
                             &kToggleVerb, &kSliceVerb, &kExamineVerb, &kPrepIn, &kPrepOn}) {
            add(s->a);
            add(s->b);
        }
        for (const auto& [cls, adj] : adjective_table()) {
            add(cls);
            add(adj.a);
            add(adj.b);
        }
        return v;
    }();
    return vocab;
}

json Vocabulary::to_json() const { return {{"tokens", tokens}}; }

Vocabulary Vocabulary::from_json(const json& j) {
    Vocabulary v;
    v.tokens = j["tokens"].get<std::vector<std::string>>();
    return v;
}

// ---------------------------------------------------------------------------
// Navigation BFS over (x, y, heading)

namespace {

int pose_index(const Layout& l, int x, int y, Heading h) {
    return (y * l.width + x) * 4 + static_cast<int>(h);
}

bool faces(const Layout& l, int x, int y, Heading h, Cell target) {
    Cell f = forward_of(h);
    return x + f.x == target.x && y + f.y == target.y;
}

}  // namespace

std::optional<NavPlan> shortest_path_to_face(const EpisodeState& state, Cell target) {
    const Layout& l = state.layout;
    const int n = l.width * l.height * 4;
    std::vector<int> parent(n, -2);  // -2 unvisited, -1 root
    std::vector<ActionTag> via(n, ActionTag::Stop);

    const int start = pose_index(l, state.pose.x, state.pose.y, state.pose.heading);
    parent[start] = -1;
    std::deque<int> queue{start};

    int goal = -1;
    if (faces(l, state.pose.x, state.pose.y, state.pose.heading, target)) goal = start;

    while (!queue.empty() && goal < 0) {
        const int cur = queue.front();
        queue.pop_front();
        const int h = cur % 4;
        const int cellidx = cur / 4;
        const int x = cellidx % l.width;
        const int y = cellidx / l.width;

        struct Next {
            ActionTag tag;
            int x, y, h;
        };
        const Cell f = forward_of(static_cast<Heading>(h));
        const Next nexts[3] = {
            {ActionTag::MoveAhead, x + f.x, y + f.y, h},
            {ActionTag::RotateRight, x, y, (h + 1) % 4},
            {ActionTag::RotateLeft, x, y, (h + 3) % 4},
        };
        for (const auto& nx : nexts) {
            if (nx.tag == ActionTag::MoveAhead && !l.walkable(nx.x, nx.y)) continue;
            const int idx = pose_index(l, nx.x, nx.y, static_cast<Heading>(nx.h));
            if (parent[idx] != -2) continue;
            parent[idx] = cur;
            via[idx] = nx.tag;
            if (faces(l, nx.x, nx.y, static_cast<Heading>(nx.h), target)) {
                goal = idx;
                break;
            }
            queue.push_back(idx);
        }
    }
    if (goal < 0) return std::nullopt;

    NavPlan plan;
    for (int cur = goal; parent[cur] != -1; cur = parent[cur]) plan.actions.push_back(via[cur]);
    std::reverse(plan.actions.begin(), plan.actions.end());
    const int h = goal % 4;
    const int cellidx = goal / 4;
    plan.end = {cellidx % l.width, cellidx / l.width, static_cast<Heading>(h), state.pose.pitch};
    return plan;
}

std::optional<int> face_distance(const EpisodeState& state, Cell target) {
    auto plan = shortest_path_to_face(state, target);
    if (!plan) return std::nullopt;
    return static_cast<int>(plan->actions.size());
}

// ---------------------------------------------------------------------------
// Planner

namespace {

ActionTag subgoal_action(SubgoalKind k) {
    switch (k) {
        case SubgoalKind::Pickup: return ActionTag::Pickup;
        case SubgoalKind::Put: return ActionTag::Put;
        case SubgoalKind::Open: return ActionTag::Open;
        case SubgoalKind::Close: return ActionTag::Close;
        case SubgoalKind::Toggle: return ActionTag::ToggleOn;
        case SubgoalKind::Slice: return ActionTag::Slice;
        default: return ActionTag::Stop;
    }
}

struct PlanBuilder {
    EpisodeState state;
    Trajectory traj;
    bool failed = false;

    void record(const Action& action, int cls) {
        TrajectoryStep ts;
        ts.observation = render(state);
        ts.action = action;
        ts.interaction_class = cls;
        traj.steps.push_back(std::move(ts));
    }

    bool goto_cell(Cell target, const std::string& cls, int instance) {
        auto nav = shortest_path_to_face(state, target);
        if (!nav) return false;
        if (nav->actions.empty()) return true;
        Subgoal sg;
        sg.kind = SubgoalKind::Goto;
        sg.target_class = cls;
        sg.target_cell = target;
        sg.target_instance = instance;
        sg.start = static_cast<int>(traj.steps.size());
        sg.length = static_cast<int>(nav->actions.size());
        for (ActionTag tag : nav->actions) {
            record({tag, {}}, -1);
            if (step(state, {tag, {}}) != StepEvent::Ok) return false;
        }
        traj.subgoals.push_back(sg);
        return true;
    }

    bool interact(SubgoalKind kind, int instance, int object_instance = -1) {
        const auto instances = all_visible_instances(state);
        const MaskInstance* found = nullptr;
        for (const auto& mi : instances)
            if (mi.instance_id == instance) found = &mi;
        if (!found) return false;

        Subgoal sg;
        sg.kind = kind;
        sg.target_class = instance_class(state, instance);
        sg.target_cell = instance_cell(state, instance);
        sg.target_instance = instance;
        sg.object_instance = object_instance;
        sg.start = static_cast<int>(traj.steps.size());
        sg.length = 1;

        Action action{subgoal_action(kind), found->mask};
        const int cls = state.spec->class_id(sg.target_class);
        record(action, cls);
        if (step(state, action) != StepEvent::Ok) return false;
        traj.subgoals.push_back(sg);
        return true;
    }

    bool approach_and(SubgoalKind kind, int instance, int object_instance = -1) {
        Cell target = instance_cell(state, instance);
        return goto_cell(target, instance_class(state, instance), instance) &&
               interact(kind, instance, object_instance);
    }

    // nearest by BFS facing distance; ties broken by lower instance id
    int nearest(const std::vector<int>& candidates) {
        int best = -1, best_d = 0;
        for (int id : candidates) {
            auto d = face_distance(state, instance_cell(state, id));
            if (!d) continue;
            if (best < 0 || *d < best_d) {
                best = id;
                best_d = *d;
            }
        }
        return best;
    }

    int object_id(int obj_index) const {
        return static_cast<int>(state.layout.receptacles.size()) + obj_index;
    }

    std::vector<int> objects_of_class(const std::string& cls, const std::vector<int>& exclude = {}) {
        std::vector<int> out;
        for (size_t o = 0; o < state.layout.objects.size(); ++o) {
            if (state.layout.objects[o].cls != cls) continue;
            int id = object_id(static_cast<int>(o));
            if (std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
            out.push_back(id);
        }
        return out;
    }

    int free_capacity(int rec) const {
        int used = 0;
        for (size_t o = 0; o < state.object_location.size(); ++o) {
            if (static_cast<int>(o) == state.holding) continue;
            const auto& loc = state.object_location[o];
            if (!loc.on_floor && loc.receptacle == rec) ++used;
        }
        return state.layout.receptacles[rec].capacity - used;
    }

    std::vector<int> receptacles_of_class(const std::string& cls, int min_free) {
        std::vector<int> out;
        for (size_t r = 0; r < state.layout.receptacles.size(); ++r)
            if (state.layout.receptacles[r].cls == cls && free_capacity(static_cast<int>(r)) >= min_free)
                out.push_back(static_cast<int>(r));
        return out;
    }

    std::vector<int> surface_receptacles(int min_free) {
        std::vector<int> out;
        for (size_t r = 0; r < state.layout.receptacles.size(); ++r) {
            const auto& rs = state.layout.receptacles[r];
            if (!rs.openable && !rs.toggleable && free_capacity(static_cast<int>(r)) >= min_free)
                out.push_back(static_cast<int>(r));
        }
        return out;
    }

    // pick up `obj`, carry it to receptacle `rec` and place it, opening and
    // closing the receptacle when needed
    bool fetch_and_place(int obj, int rec) {
        if (!approach_and(SubgoalKind::Pickup, obj)) return false;
        Cell rc = state.layout.receptacles[rec].cell;
        if (!goto_cell(rc, state.layout.receptacles[rec].cls, rec)) return false;
        const bool openable = state.layout.receptacles[rec].openable;
        if (openable && !state.open_state[rec] && !interact(SubgoalKind::Open, rec)) return false;
        if (!interact(SubgoalKind::Put, rec, obj)) return false;
        if (openable && !interact(SubgoalKind::Close, rec)) return false;
        return true;
    }
};

std::string goal_object_class(const GoalSpec& goal) {
    for (const auto& c : goal.conditions)
        if (!c.object_class.empty()) return c.object_class;
    return {};
}

std::string goal_receptacle_class(const GoalSpec& goal) {
    for (const auto& c : goal.conditions)
        if (!c.receptacle_class.empty()) return c.receptacle_class;
    return {};
}

}  // namespace

std::optional<Trajectory> plan(const Layout& layout, const GoalSpec& goal, const AgentPose& start,
                               const WorldOptions& options, int max_steps, const WorldSpec& spec) {
    PlanBuilder pb;
    pb.state = reset(layout, goal, start, options, spec);
    pb.traj.layout = layout;
    pb.traj.goal = goal;
    pb.traj.start = start;
    pb.traj.episode_seed = options.episode_seed;
    pb.traj.world_options = options;

    const std::string obj_cls = goal_object_class(goal);
    const std::string rec_cls = goal_receptacle_class(goal);

    bool ok = true;
    switch (goal.task_type) {
        case TaskType::PickAndPlace:
        case TaskType::OpenAndPlace: {
            int obj = pb.nearest(pb.objects_of_class(obj_cls));
            int rec = obj >= 0 ? pb.nearest(pb.receptacles_of_class(rec_cls, 1)) : -1;
            ok = obj >= 0 && rec >= 0 && pb.fetch_and_place(obj, rec);
            break;
        }
        case TaskType::PickTwoAndPlace: {
            std::vector<int> placed;
            for (int k = 0; k < 2 && ok; ++k) {
                int obj = pb.nearest(pb.objects_of_class(obj_cls, placed));
                int rec = obj >= 0 ? pb.nearest(pb.receptacles_of_class(rec_cls, 1)) : -1;
                ok = obj >= 0 && rec >= 0 && pb.fetch_and_place(obj, rec);
                placed.push_back(obj);
            }
            break;
        }
        case TaskType::SliceAndPlace: {
            int knife = pb.nearest(pb.objects_of_class(spec.knife_class));
            ok = knife >= 0 && pb.approach_and(SubgoalKind::Pickup, knife);
            int obj = ok ? pb.nearest(pb.objects_of_class(obj_cls)) : -1;
            ok = ok && obj >= 0 && pb.approach_and(SubgoalKind::Slice, obj);
            if (ok) {
                int stash = pb.nearest(pb.surface_receptacles(1));
                ok = stash >= 0 && pb.goto_cell(pb.state.layout.receptacles[stash].cell,
                                                pb.state.layout.receptacles[stash].cls, stash) &&
                     pb.interact(SubgoalKind::Put, stash, knife);
            }
            if (ok) {
                int rec = pb.nearest(pb.receptacles_of_class(rec_cls, 1));
                ok = rec >= 0 && pb.fetch_and_place(obj, rec);
            }
            break;
        }
        case TaskType::Examine: {
            int obj = pb.nearest(pb.objects_of_class(obj_cls));
            ok = obj >= 0 && pb.approach_and(SubgoalKind::Pickup, obj);
            if (ok) {
                int lamp = pb.nearest(pb.receptacles_of_class(rec_cls, 0));
                ok = lamp >= 0 && pb.approach_and(SubgoalKind::Toggle, lamp);
            }
            break;
        }
    }
    if (!ok) return std::nullopt;

    pb.record({ActionTag::Stop, {}}, -1);
    if (step(pb.state, {ActionTag::Stop, {}}) != StepEvent::Done) return std::nullopt;

    if (static_cast<int>(pb.traj.steps.size()) > max_steps) return std::nullopt;
    if (!check_goal(pb.state, goal).task_success) return std::nullopt;
    return pb.traj;
}

// ---------------------------------------------------------------------------
// Goal and start sampling

std::optional<GoalSpec> sample_goal(const Layout& layout, Rng& rng, const WorldSpec& spec) {
    // initial occupancy per receptacle
    std::vector<int> used(layout.receptacles.size(), 0);
    for (const auto& o : layout.objects)
        if (!o.on_floor) used[o.receptacle]++;

    auto free_cap = [&](size_t r) { return layout.receptacles[r].capacity - used[r]; };
    auto count_in = [&](const std::string& ocls, const std::string& rcls) {
        int n = 0;
        for (const auto& o : layout.objects)
            if (!o.on_floor && o.cls == ocls && layout.receptacles[o.receptacle].cls == rcls) ++n;
        return n;
    };

    std::vector<std::string> obj_classes;
    for (const auto& o : layout.objects)
        if (std::find(obj_classes.begin(), obj_classes.end(), o.cls) == obj_classes.end())
            obj_classes.push_back(o.cls);

    auto rec_classes_with = [&](bool openable, bool surface, int min_free) {
        std::vector<std::string> out;
        for (size_t r = 0; r < layout.receptacles.size(); ++r) {
            const auto& rs = layout.receptacles[r];
            if (openable && !rs.openable) continue;
            if (surface && (rs.openable || rs.toggleable)) continue;
            if (free_cap(r) < min_free) continue;
            if (std::find(out.begin(), out.end(), rs.cls) == out.end()) out.push_back(rs.cls);
        }
        return out;
    };

    struct Candidate {
        TaskType type;
        GoalSpec goal;
    };
    std::vector<Candidate> candidates;

    // PickAndPlace: object onto a surface receptacle not already holding it
    for (const auto& ocls : obj_classes)
        for (const auto& rcls : rec_classes_with(false, true, 1))
            if (count_in(ocls, rcls) == 0)
                candidates.push_back({TaskType::PickAndPlace,
                                      {TaskType::PickAndPlace,
                                       {{Condition::Kind::In, ocls, rcls, 1}}}});

    // PickTwoAndPlace: a duplicated class and room for both
    for (const auto& ocls : obj_classes) {
        int n = 0;
        for (const auto& o : layout.objects)
            if (o.cls == ocls) ++n;
        if (n < 2) continue;
        for (size_t r = 0; r < layout.receptacles.size(); ++r) {
            const auto& rs = layout.receptacles[r];
            if (rs.openable || rs.toggleable || free_cap(r) < 2) continue;
            if (count_in(ocls, rs.cls) != 0) continue;
            bool dup = false;
            for (const auto& c : candidates)
                if (c.type == TaskType::PickTwoAndPlace && c.goal.conditions[0].object_class == ocls &&
                    c.goal.conditions[0].receptacle_class == rs.cls)
                    dup = true;
            if (!dup)
                candidates.push_back({TaskType::PickTwoAndPlace,
                                      {TaskType::PickTwoAndPlace,
                                       {{Condition::Kind::CountIn, ocls, rs.cls, 2}}}});
        }
    }

    // OpenAndPlace: object into an openable receptacle
    for (const auto& ocls : obj_classes)
        for (const auto& rcls : rec_classes_with(true, false, 1))
            if (count_in(ocls, rcls) == 0)
                candidates.push_back({TaskType::OpenAndPlace,
                                      {TaskType::OpenAndPlace,
                                       {{Condition::Kind::In, ocls, rcls, 1}}}});

    // SliceAndPlace: needs the knife, a sliceable object and two surface slots
    bool knife_present = false;
    for (const auto& o : layout.objects)
        if (o.cls == spec.knife_class) knife_present = true;
    int total_surface_free = 0;
    for (size_t r = 0; r < layout.receptacles.size(); ++r) {
        const auto& rs = layout.receptacles[r];
        if (!rs.openable && !rs.toggleable) total_surface_free += free_cap(r);
    }
    if (knife_present && total_surface_free >= 2) {
        for (const auto& ocls : obj_classes) {
            if (ocls == spec.knife_class) continue;
            int ci = spec.object_class_index(ocls);
            if (ci < 0 || !spec.object_sliceable[ci]) continue;
            for (const auto& rcls : rec_classes_with(false, true, 1))
                if (count_in(ocls, rcls) == 0)
                    candidates.push_back({TaskType::SliceAndPlace,
                                          {TaskType::SliceAndPlace,
                                           {{Condition::Kind::Sliced, ocls, "", 1},
                                            {Condition::Kind::In, ocls, rcls, 1}}}});
        }
    }

    // Examine: hold an object under a toggled lamp
    std::vector<std::string> lamp_classes;
    for (const auto& r : layout.receptacles)
        if (r.toggleable && std::find(lamp_classes.begin(), lamp_classes.end(), r.cls) == lamp_classes.end())
            lamp_classes.push_back(r.cls);
    for (const auto& ocls : obj_classes)
        for (const auto& lcls : lamp_classes)
            candidates.push_back({TaskType::Examine,
                                  {TaskType::Examine,
                                   {{Condition::Kind::Toggled, "", lcls, 1},
                                    {Condition::Kind::Holding, ocls, "", 1}}}});

    if (candidates.empty()) return std::nullopt;

    // uniform over task types first, then over candidates of that type
    std::vector<TaskType> types;
    for (const auto& c : candidates)
        if (std::find(types.begin(), types.end(), c.type) == types.end()) types.push_back(c.type);
    TaskType pick = rng.choice(types);
    std::vector<Candidate> of_type;
    for (const auto& c : candidates)
        if (c.type == pick) of_type.push_back(c);
    return of_type[rng.next_below(of_type.size())].goal;
}

AgentPose sample_start(const Layout& layout, Rng& rng) {
    std::vector<Cell> cells;
    for (int y = 0; y < layout.height; ++y)
        for (int x = 0; x < layout.width; ++x)
            if (layout.walkable(x, y)) cells.push_back({x, y});
    Cell c = cells[rng.next_below(cells.size())];
    return {c.x, c.y, static_cast<Heading>(rng.next_below(4)), 0};
}

// ---------------------------------------------------------------------------
// Templated language

namespace {

std::string pick_syn(const Syn& s, Rng& rng) { return rng.next_bool() ? s.b : s.a; }

const Syn& preposition_for(const std::string& rec_cls, const WorldSpec& spec) {
    int i = spec.receptacle_class_index(rec_cls);
    if (i >= 0 && spec.receptacle_openable[i]) return kPrepIn;
    return kPrepOn;
}

}  // namespace

InstructionPair templatize(const Trajectory& trajectory, uint64_t rng_seed, const Vocabulary& vocab,
                           const WorldSpec& spec) {
    Rng rng(rng_seed);

    // one adjective per class per episode, drawn in a fixed order so that two
    // seeds consume the same rng stream positions
    std::map<std::string, std::string> adj;
    for (const auto& [cls, syns] : adjective_table()) adj[cls] = pick_syn(syns, rng);

    auto noun = [&](std::vector<std::string>& out, const std::string& cls) {
        out.push_back(adj.at(cls));
        out.push_back(cls);
    };

    const GoalSpec& goal = trajectory.goal;
    std::string obj_cls, rec_cls;
    for (const auto& c : goal.conditions) {
        if (obj_cls.empty() && !c.object_class.empty()) obj_cls = c.object_class;
        if (rec_cls.empty() && !c.receptacle_class.empty()) rec_cls = c.receptacle_class;
    }

    InstructionPair out;
    auto& g = out.goal_tokens;
    switch (goal.task_type) {
        case TaskType::PickAndPlace:
        case TaskType::OpenAndPlace:
            g.push_back(pick_syn(kPutVerb, rng));
            g.push_back("the");
            noun(g, obj_cls);
            g.push_back(pick_syn(preposition_for(rec_cls, spec), rng));
            g.push_back("the");
            noun(g, rec_cls);
            break;
        case TaskType::PickTwoAndPlace:
            g.push_back(pick_syn(kPutVerb, rng));
            g.push_back("two");
            noun(g, obj_cls);
            g.push_back("items");
            g.push_back(pick_syn(preposition_for(rec_cls, spec), rng));
            g.push_back("the");
            noun(g, rec_cls);
            break;
        case TaskType::SliceAndPlace:
            g.push_back(pick_syn(kSliceVerb, rng));
            g.push_back("the");
            noun(g, obj_cls);
            g.push_back("and");
            g.push_back(pick_syn(kPutVerb, rng));
            g.push_back("it");
            g.push_back(pick_syn(preposition_for(rec_cls, spec), rng));
            g.push_back("the");
            noun(g, rec_cls);
            break;
        case TaskType::Examine:
            g.push_back(pick_syn(kExamineVerb, rng));
            g.push_back("the");
            noun(g, obj_cls);
            g.push_back("under");
            g.push_back("the");
            noun(g, rec_cls);
            break;
    }

    for (const auto& sg : trajectory.subgoals) {
        std::vector<std::string> s;
        switch (sg.kind) {
            case SubgoalKind::Goto:
                s.push_back(pick_syn(kGotoVerb, rng));
                s.push_back("to");
                s.push_back("the");
                noun(s, sg.target_class);
                break;
            case SubgoalKind::Pickup:
                s.push_back(pick_syn(kPickupVerb, rng));
                s.push_back("the");
                noun(s, sg.target_class);
                break;
            case SubgoalKind::Put:
                s.push_back(pick_syn(kPutVerb, rng));
                s.push_back("it");
                s.push_back(pick_syn(preposition_for(sg.target_class, spec), rng));
                s.push_back("the");
                noun(s, sg.target_class);
                break;
            case SubgoalKind::Open:
                s.push_back(pick_syn(kOpenVerb, rng));
                s.push_back("the");
                noun(s, sg.target_class);
                break;
            case SubgoalKind::Close:
                s.push_back(pick_syn(kCloseVerb, rng));
                s.push_back("the");
                noun(s, sg.target_class);
                break;
            case SubgoalKind::Toggle:
                s.push_back(pick_syn(kToggleVerb, rng));
                s.push_back("the");
                noun(s, sg.target_class);
                break;
            case SubgoalKind::Slice:
                s.push_back(pick_syn(kSliceVerb, rng));
                s.push_back("the");
                noun(s, sg.target_class);
                break;
        }
        out.instr_sentences.push_back(s);
    }

    for (size_t i = 0; i < out.instr_sentences.size(); ++i) {
        if (i > 0) out.instr_tokens.push_back("then");
        for (const auto& t : out.instr_sentences[i]) out.instr_tokens.push_back(t);
    }

    for (const auto& t : out.goal_tokens) out.goal_ids.push_back(vocab.require_id(t));
    for (const auto& t : out.instr_tokens) out.instr_ids.push_back(vocab.require_id(t));
    return out;
}

// ---------------------------------------------------------------------------
// Replay

ReplayReport replay_trajectory(const Trajectory& traj, bool check_observations, const WorldSpec& spec) {
    ReplayReport rep;
    EpisodeState s = reset(traj.layout, traj.goal, traj.start, traj.world_options, spec);
    for (const auto& ts : traj.steps) {
        if (check_observations && !(render(s) == ts.observation)) rep.observations_match = false;
        StepEvent ev = step(s, ts.action);
        if (ev == StepEvent::Blocked) rep.blocked_events++;
        if (ev == StepEvent::ApiFail) rep.api_fail_events++;
    }
    GoalCheck gc = check_goal(s, traj.goal);
    rep.task_success = gc.task_success;
    rep.satisfied = gc.satisfied;
    rep.total = gc.total;
    return rep;
}

// ---------------------------------------------------------------------------
// Dataset serialization

json DatasetConfig::to_json() const {
    return {{"master_seed", master_seed},
            {"train_episodes", train_episodes},
            {"seen_episodes", seen_episodes},
            {"unseen_episodes", unseen_episodes},
            {"generator", generator.to_json()},
            {"confidence_noise_amplitude", confidence_noise_amplitude},
            {"mask_noise", mask_noise},
            {"max_steps", max_steps},
            {"retry_cap", retry_cap}};
}

DatasetConfig DatasetConfig::from_json(const json& j) {
    DatasetConfig c;
    c.master_seed = j.value("master_seed", c.master_seed);
    c.train_episodes = j.value("train_episodes", c.train_episodes);
    c.seen_episodes = j.value("seen_episodes", c.seen_episodes);
    c.unseen_episodes = j.value("unseen_episodes", c.unseen_episodes);
    if (j.contains("generator")) c.generator = GeneratorConfig::from_json(j["generator"]);
    c.confidence_noise_amplitude = j.value("confidence_noise_amplitude", c.confidence_noise_amplitude);
    c.mask_noise = j.value("mask_noise", c.mask_noise);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.retry_cap = j.value("retry_cap", c.retry_cap);
    return c;
}

const char* dataset_split_dir(Split s) {
    static const char* names[] = {"train", "valid_seen", "valid_unseen"};
    return names[static_cast<int>(s)];
}

namespace {

json pose_json(const AgentPose& p) {
    return {{"x", p.x}, {"y", p.y}, {"heading", static_cast<int>(p.heading)}, {"pitch", p.pitch}};
}

AgentPose pose_from_json(const json& j) {
    return {j["x"].get<int>(), j["y"].get<int>(), static_cast<Heading>(j["heading"].get<int>()),
            j["pitch"].get<int>()};
}

json trajectory_json(const Trajectory& t, const WorldSpec& spec, const std::string& npy_name) {
    json steps = json::array();
    for (const auto& ts : t.steps) {
        json sj;
        sj["action"] = action_name(ts.action.tag);
        sj["class"] = ts.interaction_class;
        if (is_interaction(ts.action.tag)) sj["mask_rle"] = rle_encode(ts.action.mask);
        steps.push_back(sj);
    }
    json subgoals = json::array();
    for (const auto& sg : t.subgoals) {
        subgoals.push_back({{"kind", subgoal_kind_name(sg.kind)},
                            {"target_class", sg.target_class},
                            {"target_cell", json::array({sg.target_cell.x, sg.target_cell.y})},
                            {"target_instance", sg.target_instance},
                            {"object_instance", sg.object_instance},
                            {"start", sg.start},
                            {"length", sg.length}});
    }
    json lang = {{"goal_tokens", t.language.goal_tokens},
                 {"instr_sentences", t.language.instr_sentences},
                 {"instr_tokens", t.language.instr_tokens},
                 {"goal_ids", t.language.goal_ids},
                 {"instr_ids", t.language.instr_ids}};
    return {{"layout", t.layout.to_json()},
            {"goal", t.goal.to_json()},
            {"start", pose_json(t.start)},
            {"episode_seed", t.episode_seed},
            {"world_options",
             {{"confidence_noise_amplitude", t.world_options.confidence_noise_amplitude},
              {"mask_noise", t.world_options.mask_noise}}},
            {"language", lang},
            {"steps", steps},
            {"subgoals", subgoals},
            {"num_steps", t.steps.size()},
            {"observation",
             {{"channels", spec.channels()},
              {"height", spec.obs_px()},
              {"width", spec.obs_px()},
              {"file", npy_name},
              {"manifest", spec.channel_manifest()}}}};
}

SubgoalKind subgoal_kind_from_name(const std::string& name) {
    for (int k = 0; k < kNumSubgoalKinds; ++k)
        if (name == subgoal_kind_name(static_cast<SubgoalKind>(k))) return static_cast<SubgoalKind>(k);
    throw std::invalid_argument("unknown subgoal kind: " + name);
}

struct BuiltEpisode {
    Trajectory traj;
    EpisodeMeta meta;
};

BuiltEpisode build_episode(const DatasetConfig& cfg, Split split, int index, const WorldSpec& spec) {
    for (int attempt = 0; attempt < cfg.retry_cap; ++attempt) {
        const uint64_t seed = derive_seed(cfg.master_seed, std::string("episode:") + dataset_split_dir(split),
                                          (static_cast<uint64_t>(index) << 16) | static_cast<uint64_t>(attempt));
        Layout layout = generate_layout(seed, split, cfg.generator, spec);
        Rng goal_rng(derive_seed(seed, "goal"));
        auto goal = sample_goal(layout, goal_rng, spec);
        if (!goal) continue;
        Rng start_rng(derive_seed(seed, "start"));
        AgentPose start = sample_start(layout, start_rng);
        WorldOptions opts;
        opts.confidence_noise_amplitude = cfg.confidence_noise_amplitude;
        opts.mask_noise = cfg.mask_noise;
        opts.episode_seed = derive_seed(seed, "world");
        auto traj = plan(layout, *goal, start, opts, cfg.max_steps, spec);
        if (!traj) continue;
        traj->language = templatize(*traj, derive_seed(seed, "language"), Vocabulary::standard(), spec);

        BuiltEpisode out;
        out.meta.index = index;
        char buf[64];
        snprintf(buf, sizeof(buf), "%s/ep_%05d", dataset_split_dir(split), index);
        out.meta.file_prefix = buf;
        out.meta.layout_seed = seed;
        out.meta.episode_seed = opts.episode_seed;
        out.meta.arrangement_id = layout.arrangement_id;
        out.meta.task_type = goal->task_type;
        out.meta.num_steps = static_cast<int>(traj->steps.size());
        out.traj = std::move(*traj);
        return out;
    }
    throw std::runtime_error("dataset builder: retry cap exceeded for episode " + std::to_string(index) +
                             " of split " + dataset_split_dir(split));
}

void write_episode(const std::filesystem::path& dir, const BuiltEpisode& ep, const WorldSpec& spec) {
    const std::string npy_name = std::filesystem::path(ep.meta.file_prefix).filename().string() + ".npy";
    json j = trajectory_json(ep.traj, spec, npy_name);
    write_file(dir / (ep.meta.file_prefix + ".json"), j.dump(1));

    const int C = spec.channels(), px = spec.obs_px();
    const int T = static_cast<int>(ep.traj.steps.size());
    std::vector<uint8_t> stack;
    stack.reserve(static_cast<size_t>(T) * C * px * px);
    for (const auto& ts : ep.traj.steps) {
        auto u8 = ts.observation.to_u8();
        stack.insert(stack.end(), u8.begin(), u8.end());
    }
    npy::save(dir / (ep.meta.file_prefix + ".npy"), stack, {T, C, px, px});
}

json meta_json(const EpisodeMeta& m) {
    return {{"index", m.index},
            {"file", m.file_prefix},
            {"layout_seed", m.layout_seed},
            {"episode_seed", m.episode_seed},
            {"arrangement_id", m.arrangement_id},
            {"task_type", task_type_name(m.task_type)},
            {"num_steps", m.num_steps}};
}

EpisodeMeta meta_from_json(const json& j) {
    EpisodeMeta m;
    m.index = j["index"].get<int>();
    m.file_prefix = j["file"].get<std::string>();
    m.layout_seed = j["layout_seed"].get<uint64_t>();
    m.episode_seed = j["episode_seed"].get<uint64_t>();
    m.arrangement_id = j["arrangement_id"].get<int>();
    m.task_type = *task_type_from_name(j["task_type"].get<std::string>());
    m.num_steps = j["num_steps"].get<int>();
    return m;
}

}  // namespace

DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                              const WorldSpec& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (int s = 0; s < 3; ++s) fs::create_directories(out_dir / dataset_split_dir(static_cast<Split>(s)));

    const Vocabulary& vocab = Vocabulary::standard();
    write_file(out_dir / "vocab.json", vocab.to_json().dump(1));

    DatasetManifest manifest;
    manifest.config = cfg;
    manifest.vocab_hash = vocab.hash();

    const int counts[3] = {cfg.train_episodes, cfg.seen_episodes, cfg.unseen_episodes};
    for (int s = 0; s < 3; ++s) {
        const Split split = static_cast<Split>(s);
        const int n = counts[s];
        std::vector<EpisodeMeta> metas(n);
        std::string error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, cfg.jobs))
#endif
        for (int i = 0; i < n; ++i) {
            try {
                BuiltEpisode ep = build_episode(cfg, split, i, spec);
                write_episode(out_dir, ep, spec);
                metas[i] = ep.meta;
            } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
                error = e.what();
            }
        }
        if (!error.empty()) throw std::runtime_error(error);
        manifest.splits[s] = std::move(metas);
    }

    json mj;
    mj["format_version"] = 1;
    mj["config"] = cfg.to_json();
    mj["vocab_hash"] = manifest.vocab_hash;
    json splits;
    for (int s = 0; s < 3; ++s) {
        json arr = json::array();
        for (const auto& m : manifest.splits[s]) arr.push_back(meta_json(m));
        splits[dataset_split_dir(static_cast<Split>(s))] = arr;
    }
    mj["splits"] = splits;
    write_file(out_dir / "manifest.json", mj.dump(1));
    return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir) {
    json mj = json::parse(read_file(dataset_dir / "manifest.json"));
    DatasetManifest m;
    m.config = DatasetConfig::from_json(mj["config"]);
    m.vocab_hash = mj["vocab_hash"].get<uint64_t>();
    for (int s = 0; s < 3; ++s)
        for (const auto& e : mj["splits"][dataset_split_dir(static_cast<Split>(s))])
            m.splits[s].push_back(meta_from_json(e));
    return m;
}

Trajectory load_trajectory(const std::filesystem::path& dataset_dir, const EpisodeMeta& meta,
                           bool with_observations, const WorldSpec& spec) {
    json j = json::parse(read_file(dataset_dir / (meta.file_prefix + ".json")));

    Trajectory t;
    t.layout = Layout::from_json(j["layout"]);
    t.goal = GoalSpec::from_json(j["goal"]);
    t.start = pose_from_json(j["start"]);
    t.episode_seed = j["episode_seed"].get<uint64_t>();
    t.world_options.episode_seed = t.episode_seed;
    t.world_options.confidence_noise_amplitude =
        j["world_options"]["confidence_noise_amplitude"].get<double>();
    t.world_options.mask_noise = j["world_options"]["mask_noise"].get<bool>();

    const auto& lang = j["language"];
    t.language.goal_tokens = lang["goal_tokens"].get<std::vector<std::string>>();
    t.language.instr_sentences = lang["instr_sentences"].get<std::vector<std::vector<std::string>>>();
    t.language.instr_tokens = lang["instr_tokens"].get<std::vector<std::string>>();
    t.language.goal_ids = lang["goal_ids"].get<std::vector<int>>();
    t.language.instr_ids = lang["instr_ids"].get<std::vector<int>>();

    const int C = j["observation"]["channels"].get<int>();
    const int H = j["observation"]["height"].get<int>();
    const int W = j["observation"]["width"].get<int>();

    for (const auto& sj : j["steps"]) {
        TrajectoryStep ts;
        ts.action.tag = *action_from_name(sj["action"].get<std::string>());
        ts.interaction_class = sj["class"].get<int>();
        if (sj.contains("mask_rle"))
            ts.action.mask = rle_decode(sj["mask_rle"].get<std::vector<int>>(), static_cast<size_t>(H) * W);
        t.steps.push_back(std::move(ts));
    }
    for (const auto& gj : j["subgoals"]) {
        Subgoal sg;
        sg.kind = subgoal_kind_from_name(gj["kind"].get<std::string>());
        sg.target_class = gj["target_class"].get<std::string>();
        sg.target_cell = {gj["target_cell"][0].get<int>(), gj["target_cell"][1].get<int>()};
        sg.target_instance = gj["target_instance"].get<int>();
        sg.object_instance = gj["object_instance"].get<int>();
        sg.start = gj["start"].get<int>();
        sg.length = gj["length"].get<int>();
        t.subgoals.push_back(sg);
    }

    if (with_observations) {
        std::vector<uint8_t> stack;
        std::vector<int64_t> shape;
        npy::load(dataset_dir / (meta.file_prefix + ".npy"), stack, shape);
        if (shape.size() != 4 || shape[0] != static_cast<int64_t>(t.steps.size()) || shape[1] != C ||
            shape[2] != H || shape[3] != W)
            throw std::runtime_error("trajectory npy shape mismatch: " + meta.file_prefix);
        const size_t frame = static_cast<size_t>(C) * H * W;
        for (size_t i = 0; i < t.steps.size(); ++i) {
            std::vector<uint8_t> one(stack.begin() + i * frame, stack.begin() + (i + 1) * frame);
            t.steps[i].observation = Observation::from_u8(one, C, H, W);
        }
    }
    return t;
}

uint64_t manifest_hash(const std::filesystem::path& dataset_dir) {
    return file_hash(dataset_dir / "manifest.json");
}

}  // namespace gridagent
