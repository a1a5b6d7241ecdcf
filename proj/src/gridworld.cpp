#include "gridagent/gridworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "gridagent/rng.hpp"

namespace gridagent {

// ---------------------------------------------------------------------------
// Names

const char* action_name(ActionTag t) {
    static const char* names[] = {"MoveAhead", "RotateRight", "RotateLeft", "LookUp",
                                  "LookDown",  "Pickup",      "Put",        "Open",
                                  "Close",     "ToggleOn",    "ToggleOff",  "Slice",
                                  "Stop"};
    return names[static_cast<int>(t)];
}

std::optional<ActionTag> action_from_name(const std::string& name) {
    for (int k = 0; k < kNumActions; ++k) {
        if (name == action_name(static_cast<ActionTag>(k))) return static_cast<ActionTag>(k);
    }
    return std::nullopt;
}

const char* task_type_name(TaskType t) {
    static const char* names[] = {"PickAndPlace", "PickTwoAndPlace", "OpenAndPlace",
                                  "SliceAndPlace", "Examine"};
    return names[static_cast<int>(t)];
}

std::optional<TaskType> task_type_from_name(const std::string& name) {
    for (int k = 0; k < 5; ++k) {
        if (name == task_type_name(static_cast<TaskType>(k))) return static_cast<TaskType>(k);
    }
    return std::nullopt;
}

const char* step_event_name(StepEvent e) {
    static const char* names[] = {"ok", "blocked", "api_fail", "done"};
    return names[static_cast<int>(e)];
}

const char* split_name(Split s) {
    static const char* names[] = {"train", "seen_eval", "unseen_eval"};
    return names[static_cast<int>(s)];
}

// ---------------------------------------------------------------------------
// WorldSpec

const WorldSpec& WorldSpec::standard() {
    static const WorldSpec spec = [] {
        WorldSpec s;
        s.object_classes = {"apple", "bread",  "tomato", "potato", "knife", "cup",
                            "plate", "book",   "candle", "phone",  "soap",  "pencil"};
        s.object_sliceable = {1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
        s.receptacle_classes = {"table", "counter", "drawer", "cabinet", "fridge", "lamp"};
        s.receptacle_openable = {0, 0, 1, 1, 1, 0};
        s.receptacle_toggleable = {0, 0, 0, 0, 0, 1};
        return s;
    }();
    return spec;
}

int WorldSpec::object_class_index(const std::string& name) const {
    for (size_t i = 0; i < object_classes.size(); ++i)
        if (object_classes[i] == name) return static_cast<int>(i);
    return -1;
}

int WorldSpec::receptacle_class_index(const std::string& name) const {
    for (size_t i = 0; i < receptacle_classes.size(); ++i)
        if (receptacle_classes[i] == name) return static_cast<int>(i);
    return -1;
}

int WorldSpec::class_id(const std::string& name) const {
    int o = object_class_index(name);
    if (o >= 0) return o;
    int r = receptacle_class_index(name);
    if (r >= 0) return num_object_classes() + r;
    return -1;
}

const std::string& WorldSpec::class_name(int id) const {
    if (id < num_object_classes()) return object_classes[id];
    return receptacle_classes[id - num_object_classes()];
}

std::vector<std::string> WorldSpec::channel_manifest() const {
    std::vector<std::string> m;
    for (const auto& c : object_classes) m.push_back("object:" + c);
    for (const auto& c : receptacle_classes) m.push_back("receptacle:" + c);
    m.push_back("flag:open");
    m.push_back("flag:toggled_on");
    m.push_back("flag:sliced");
    m.push_back("flag:held");
    m.push_back("occupancy");
    m.push_back("appearance:r");
    m.push_back("appearance:g");
    m.push_back("appearance:b");
    return m;
}

// ---------------------------------------------------------------------------
// Layout

bool Layout::is_wall(int x, int y) const {
    for (const auto& w : walls)
        if (w.x == x && w.y == y) return true;
    return false;
}

int Layout::receptacle_at(int x, int y) const {
    for (size_t i = 0; i < receptacles.size(); ++i)
        if (receptacles[i].cell.x == x && receptacles[i].cell.y == y) return static_cast<int>(i);
    return -1;
}

bool Layout::walkable(int x, int y) const {
    return in_bounds(x, y) && !is_wall(x, y) && receptacle_at(x, y) < 0;
}

void Layout::validate(const WorldSpec& spec) const {
    auto check = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("invalid layout: ") + what);
    };
    for (const auto& w : walls) check(in_bounds(w.x, w.y), "wall out of bounds");
    std::vector<Cell> used;
    for (const auto& r : receptacles) {
        check(in_bounds(r.cell.x, r.cell.y), "receptacle out of bounds");
        check(!is_wall(r.cell.x, r.cell.y), "receptacle on wall");
        check(r.capacity >= 1, "receptacle capacity < 1");
        check(r.capacity <= 4, "receptacle capacity > 4");
        check(spec.receptacle_class_index(r.cls) >= 0, "unknown receptacle class");
        check(std::find(used.begin(), used.end(), r.cell) == used.end(), "receptacles share a cell");
        used.push_back(r.cell);
    }
    std::vector<Cell> floor_used;
    for (const auto& o : objects) {
        check(spec.object_class_index(o.cls) >= 0, "unknown object class");
        if (o.on_floor) {
            check(in_bounds(o.cell.x, o.cell.y), "object out of bounds");
            check(!is_wall(o.cell.x, o.cell.y), "object on wall");
            check(receptacle_at(o.cell.x, o.cell.y) < 0, "floor object on receptacle cell");
            check(std::find(floor_used.begin(), floor_used.end(), o.cell) == floor_used.end(),
                  "floor objects share a cell");
            floor_used.push_back(o.cell);
        } else {
            check(o.receptacle >= 0 && o.receptacle < static_cast<int>(receptacles.size()),
                  "object receptacle index out of range");
            check(o.slot >= 0 && o.slot < receptacles[o.receptacle].capacity, "object slot out of range");
        }
        check(o.color.r >= 0 && o.color.r <= 1 && o.color.g >= 0 && o.color.g <= 1 &&
              o.color.b >= 0 && o.color.b <= 1, "object color out of range");
    }
    for (size_t i = 0; i < objects.size(); ++i) {
        for (size_t j = i + 1; j < objects.size(); ++j) {
            if (!objects[i].on_floor && !objects[j].on_floor &&
                objects[i].receptacle == objects[j].receptacle)
                check(objects[i].slot != objects[j].slot, "objects share a slot");
        }
    }
}

static json cell_json(const Cell& c) { return json::array({c.x, c.y}); }
static Cell cell_from_json(const json& j) { return {j[0].get<int>(), j[1].get<int>()}; }

json Layout::to_json() const {
    json j;
    j["width"] = width;
    j["height"] = height;
    json w = json::array();
    for (const auto& c : walls) w.push_back(cell_json(c));
    j["walls"] = w;
    json rs = json::array();
    for (const auto& r : receptacles) {
        rs.push_back({{"class", r.cls},
                      {"cell", cell_json(r.cell)},
                      {"openable", r.openable},
                      {"toggleable", r.toggleable},
                      {"capacity", r.capacity}});
    }
    j["receptacles"] = rs;
    json os = json::array();
    for (const auto& o : objects) {
        json oj = {{"class", o.cls},
                   {"sliceable", o.sliceable},
                   {"color", json::array({o.color.r, o.color.g, o.color.b})}};
        if (o.on_floor) {
            oj["cell"] = cell_json(o.cell);
        } else {
            oj["receptacle"] = o.receptacle;
            oj["slot"] = o.slot;
        }
        os.push_back(oj);
    }
    j["objects"] = os;
    j["seed"] = seed;
    j["arrangement_id"] = arrangement_id;
    j["generator_version"] = generator_version;
    return j;
}

Layout Layout::from_json(const json& j) {
    Layout l;
    l.width = j["width"].get<int>();
    l.height = j["height"].get<int>();
    for (const auto& c : j["walls"]) l.walls.push_back(cell_from_json(c));
    for (const auto& r : j["receptacles"]) {
        ReceptacleSpec rs;
        rs.cls = r["class"].get<std::string>();
        rs.cell = cell_from_json(r["cell"]);
        rs.openable = r["openable"].get<bool>();
        rs.toggleable = r["toggleable"].get<bool>();
        rs.capacity = r["capacity"].get<int>();
        l.receptacles.push_back(rs);
    }
    for (const auto& o : j["objects"]) {
        ObjectSpec os;
        os.cls = o["class"].get<std::string>();
        os.sliceable = o["sliceable"].get<bool>();
        os.color = {o["color"][0].get<double>(), o["color"][1].get<double>(), o["color"][2].get<double>()};
        if (o.contains("cell")) {
            os.on_floor = true;
            os.cell = cell_from_json(o["cell"]);
        } else {
            os.on_floor = false;
            os.receptacle = o["receptacle"].get<int>();
            os.slot = o["slot"].get<int>();
        }
        l.objects.push_back(os);
    }
    l.seed = j["seed"].get<uint64_t>();
    l.arrangement_id = j["arrangement_id"].get<int>();
    l.generator_version = j["generator_version"].get<std::string>();
    return l;
}

// ---------------------------------------------------------------------------
// Goals

static const char* condition_kind_name(Condition::Kind k) {
    switch (k) {
        case Condition::Kind::In: return "in";
        case Condition::Kind::Sliced: return "sliced";
        case Condition::Kind::Toggled: return "toggled";
        case Condition::Kind::Holding: return "holding";
        case Condition::Kind::CountIn: return "count_in";
    }
    return "?";
}

json GoalSpec::to_json() const {
    json cs = json::array();
    for (const auto& c : conditions) {
        json cj;
        cj["kind"] = condition_kind_name(c.kind);
        if (!c.object_class.empty()) cj["object"] = c.object_class;
        if (!c.receptacle_class.empty()) cj["receptacle"] = c.receptacle_class;
        if (c.kind == Condition::Kind::CountIn) cj["count"] = c.count;
        cs.push_back(cj);
    }
    return {{"task_type", task_type_name(task_type)}, {"conditions", cs}};
}

GoalSpec GoalSpec::from_json(const json& j) {
    GoalSpec g;
    auto t = task_type_from_name(j["task_type"].get<std::string>());
    if (!t) throw std::invalid_argument("unknown task type");
    g.task_type = *t;
    for (const auto& cj : j["conditions"]) {
        Condition c;
        std::string kind = cj["kind"].get<std::string>();
        if (kind == "in") c.kind = Condition::Kind::In;
        else if (kind == "sliced") c.kind = Condition::Kind::Sliced;
        else if (kind == "toggled") c.kind = Condition::Kind::Toggled;
        else if (kind == "holding") c.kind = Condition::Kind::Holding;
        else if (kind == "count_in") c.kind = Condition::Kind::CountIn;
        else throw std::invalid_argument("unknown condition kind");
        if (cj.contains("object")) c.object_class = cj["object"].get<std::string>();
        if (cj.contains("receptacle")) c.receptacle_class = cj["receptacle"].get<std::string>();
        if (cj.contains("count")) c.count = cj["count"].get<int>();
        g.conditions.push_back(c);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Observation byte conversion

std::vector<uint8_t> Observation::to_u8() const {
    std::vector<uint8_t> bytes(data.size());
    for (size_t i = 0; i < data.size(); ++i)
        bytes[i] = static_cast<uint8_t>(std::lround(data[i] * 255.0));
    return bytes;
}

Observation Observation::from_u8(const std::vector<uint8_t>& bytes, int channels, int height, int width) {
    Observation o;
    o.channels = channels;
    o.height = height;
    o.width = width;
    o.data.resize(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) o.data[i] = static_cast<double>(bytes[i]) / 255.0;
    return o;
}

// ---------------------------------------------------------------------------
// Reset

EpisodeState reset(const Layout& layout, const GoalSpec& goal, const AgentPose& start,
                   const WorldOptions& options, const WorldSpec& spec) {
    layout.validate(spec);
    if (!layout.walkable(start.x, start.y))
        throw std::invalid_argument("start pose is not on a walkable cell");
    if (start.pitch < -1 || start.pitch > 1) throw std::invalid_argument("start pitch out of range");

    EpisodeState s;
    s.spec = &spec;
    s.layout = layout;
    s.goal = goal;
    s.pose = start;
    s.holding = -1;
    s.open_state.assign(layout.receptacles.size(), 0);
    s.on_state.assign(layout.receptacles.size(), 0);
    s.sliced.assign(layout.objects.size(), 0);
    s.object_location.resize(layout.objects.size());
    for (size_t i = 0; i < layout.objects.size(); ++i) {
        const auto& o = layout.objects[i];
        s.object_location[i] = {o.on_floor, o.cell, o.receptacle, o.slot};
    }
    s.step_count = 0;
    s.terminated = false;
    s.options = options;
    return s;
}

// ---------------------------------------------------------------------------
// Rasterization (shared by render, instance extraction, mask resolution)

namespace {

struct Raster {
    int px = 0;
    std::vector<int> owner;       // topmost instance id per pixel, -1 none
    std::vector<uint8_t> blocked; // wall / out-of-bounds / receptacle footprint
    std::vector<uint8_t> wallpix; // wall or out-of-bounds pixels
};

// Slot rectangles are half-cell blocks in image space; floor objects use the
// cell's center half-block.
void fill_rect(std::vector<int>& owner, int px, int r0, int c0, int h, int w, int id) {
    for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) owner[static_cast<size_t>(r) * px + c] = id;
}

Raster rasterize(const EpisodeState& s) {
    const WorldSpec& spec = *s.spec;
    const int D = spec.window_cells;
    const int R = spec.px_per_cell;
    const int px = D * R;
    const int half = (D - 1) / 2;
    const int hs = R / 2;  // half-cell slot size

    Raster ra;
    ra.px = px;
    ra.owner.assign(static_cast<size_t>(px) * px, -1);
    ra.blocked.assign(static_cast<size_t>(px) * px, 0);
    ra.wallpix.assign(static_cast<size_t>(px) * px, 0);

    const Cell fwd = forward_of(s.pose.heading);
    const Cell rgt = right_of(s.pose.heading);
    const int depth_min = 1 + s.pose.pitch;  // pitch selects the visible row band
    const int n_recep = static_cast<int>(s.layout.receptacles.size());

    for (int cr = 0; cr < D; ++cr) {
        const int depth = depth_min + (D - 1 - cr);  // image row 0 is farthest
        for (int cc = 0; cc < D; ++cc) {
            const int lat = cc - half;
            const int wx = s.pose.x + depth * fwd.x + lat * rgt.x;
            const int wy = s.pose.y + depth * fwd.y + lat * rgt.y;
            const int br = cr * R;
            const int bc = cc * R;

            if (!s.layout.in_bounds(wx, wy) || s.layout.is_wall(wx, wy)) {
                for (int r = br; r < br + R; ++r)
                    for (int c = bc; c < bc + R; ++c) {
                        ra.blocked[static_cast<size_t>(r) * px + c] = 1;
                        ra.wallpix[static_cast<size_t>(r) * px + c] = 1;
                    }
                continue;
            }

            const int rec = s.layout.receptacle_at(wx, wy);
            if (rec >= 0) {
                for (int r = br; r < br + R; ++r)
                    for (int c = bc; c < bc + R; ++c) {
                        ra.blocked[static_cast<size_t>(r) * px + c] = 1;
                        ra.owner[static_cast<size_t>(r) * px + c] = rec;
                    }
                const auto& rs = s.layout.receptacles[rec];
                const bool contents_visible = !rs.openable || s.open_state[rec];
                if (contents_visible) {
                    for (size_t o = 0; o < s.object_location.size(); ++o) {
                        if (static_cast<int>(o) == s.holding) continue;
                        const auto& loc = s.object_location[o];
                        if (!loc.on_floor && loc.receptacle == rec) {
                            const int slot = loc.slot;
                            const int sr = br + (slot / 2) * hs;
                            const int sc = bc + (slot % 2) * hs;
                            fill_rect(ra.owner, px, sr, sc, hs, hs, n_recep + static_cast<int>(o));
                        }
                    }
                }
                continue;
            }

            for (size_t o = 0; o < s.object_location.size(); ++o) {
                if (static_cast<int>(o) == s.holding) continue;
                const auto& loc = s.object_location[o];
                if (loc.on_floor && loc.cell.x == wx && loc.cell.y == wy) {
                    fill_rect(ra.owner, px, br + R / 4, bc + R / 4, hs, hs, n_recep + static_cast<int>(o));
                }
            }
        }
    }
    return ra;
}

// Fixed per-class appearance for receptacles and walls; objects carry their
// own instance colors.
Color receptacle_class_color(const std::string& cls) {
    uint64_t h = splitmix64(fnv1a64(cls));
    auto channel = [&](int i) { return (60 + static_cast<int>((h >> (8 * i)) & 0xff) % 196) / 255.0; };
    return {channel(0), channel(1), channel(2)};
}

constexpr double kWallGray = 128.0 / 255.0;

int instance_footprint(const EpisodeState& s, int instance_id) {
    const int R = s.spec->px_per_cell;
    const int n_recep = static_cast<int>(s.layout.receptacles.size());
    return instance_id < n_recep ? R * R : (R / 2) * (R / 2);
}

PixelMask dilate1(const PixelMask& mask, int px) {
    PixelMask out = mask;
    for (int r = 0; r < px; ++r)
        for (int c = 0; c < px; ++c) {
            if (!mask[static_cast<size_t>(r) * px + c]) continue;
            if (r > 0) out[static_cast<size_t>(r - 1) * px + c] = 1;
            if (r + 1 < px) out[static_cast<size_t>(r + 1) * px + c] = 1;
            if (c > 0) out[static_cast<size_t>(r) * px + c - 1] = 1;
            if (c + 1 < px) out[static_cast<size_t>(r) * px + c + 1] = 1;
        }
    return out;
}

PixelMask erode1(const PixelMask& mask, int px) {
    PixelMask out = mask;
    for (int r = 0; r < px; ++r)
        for (int c = 0; c < px; ++c) {
            if (!mask[static_cast<size_t>(r) * px + c]) continue;
            bool boundary = r == 0 || r + 1 == px || c == 0 || c + 1 == px ||
                            !mask[static_cast<size_t>(r - 1) * px + c] ||
                            !mask[static_cast<size_t>(r + 1) * px + c] ||
                            !mask[static_cast<size_t>(r) * px + c - 1] ||
                            !mask[static_cast<size_t>(r) * px + c + 1];
            if (boundary) out[static_cast<size_t>(r) * px + c] = 0;
        }
    return out;
}

std::vector<MaskInstance> extract_instances(const EpisodeState& s, const Raster& ra, int class_filter,
                                            bool apply_noise) {
    const int px = ra.px;
    const int n_total = static_cast<int>(s.layout.receptacles.size() + s.layout.objects.size());
    std::vector<int> counts(n_total, 0);
    for (int id : ra.owner)
        if (id >= 0) counts[id]++;

    std::vector<MaskInstance> out;
    for (int id = 0; id < n_total; ++id) {
        if (counts[id] == 0) continue;
        const std::string& cls = instance_class(s, id);
        if (class_filter >= 0 && s.spec->class_id(cls) != class_filter) continue;

        MaskInstance mi;
        mi.instance_id = id;
        mi.cls = cls;
        mi.mask.assign(static_cast<size_t>(px) * px, 0);
        for (int p = 0; p < px * px; ++p)
            if (ra.owner[p] == id) mi.mask[p] = 1;

        double frac = static_cast<double>(counts[id]) / instance_footprint(s, id);
        mi.confidence = frac;
        if (apply_noise && s.options.confidence_noise_amplitude > 0) {
            uint64_t key = derive_seed(s.options.episode_seed, "confidence-noise",
                                       (static_cast<uint64_t>(id) << 32) ^ static_cast<uint32_t>(s.step_count));
            mi.confidence += s.options.confidence_noise_amplitude * hash_unit(key);
        }
        if (apply_noise && s.options.mask_noise) {
            uint64_t key = derive_seed(s.options.episode_seed, "mask-noise",
                                       (static_cast<uint64_t>(id) << 32) ^ static_cast<uint32_t>(s.step_count));
            PixelMask noisy = (splitmix64(key) & 1) ? dilate1(mi.mask, px) : erode1(mi.mask, px);
            bool empty = std::find(noisy.begin(), noisy.end(), 1) == noisy.end();
            if (!empty) mi.mask = std::move(noisy);
        }

        double sy = 0, sx = 0;
        int n = 0;
        for (int r = 0; r < px; ++r)
            for (int c = 0; c < px; ++c)
                if (mi.mask[static_cast<size_t>(r) * px + c]) {
                    sy += r;
                    sx += c;
                    ++n;
                }
        mi.center_y = sy / n;
        mi.center_x = sx / n;
        out.push_back(std::move(mi));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Render

Observation render(const EpisodeState& state) {
    const WorldSpec& spec = *state.spec;
    const int px = spec.obs_px();
    const int n_obj_cls = spec.num_object_classes();
    const int n_rec_cls = spec.num_receptacle_classes();
    const int C = spec.channels();
    const int ch_open = n_obj_cls + n_rec_cls;
    const int ch_toggled = ch_open + 1;
    const int ch_sliced = ch_open + 2;
    const int ch_held = ch_open + 3;
    const int ch_occ = ch_open + 4;
    const int ch_rgb = ch_open + 5;
    const int n_recep = static_cast<int>(state.layout.receptacles.size());

    Raster ra = rasterize(state);

    Observation obs;
    obs.channels = C;
    obs.height = px;
    obs.width = px;
    obs.data.assign(static_cast<size_t>(C) * px * px, 0.0);
    auto plane = [&](int c) { return obs.data.data() + static_cast<size_t>(c) * px * px; };

    for (int p = 0; p < px * px; ++p) {
        const int id = ra.owner[p];
        if (id >= 0) {
            if (id < n_recep) {
                const auto& r = state.layout.receptacles[id];
                plane(n_obj_cls + spec.receptacle_class_index(r.cls))[p] = 1.0;
                Color col = receptacle_class_color(r.cls);
                plane(ch_rgb)[p] = col.r;
                plane(ch_rgb + 1)[p] = col.g;
                plane(ch_rgb + 2)[p] = col.b;
                if (state.open_state[id]) plane(ch_open)[p] = 1.0;
                if (state.on_state[id]) plane(ch_toggled)[p] = 1.0;
            } else {
                const int o = id - n_recep;
                const auto& os = state.layout.objects[o];
                plane(spec.object_class_index(os.cls))[p] = 1.0;
                plane(ch_rgb)[p] = os.color.r;
                plane(ch_rgb + 1)[p] = os.color.g;
                plane(ch_rgb + 2)[p] = os.color.b;
                if (state.sliced[o]) plane(ch_sliced)[p] = 1.0;
            }
        } else if (ra.wallpix[p]) {
            plane(ch_rgb)[p] = kWallGray;
            plane(ch_rgb + 1)[p] = kWallGray;
            plane(ch_rgb + 2)[p] = kWallGray;
        }
        if (ra.blocked[p]) plane(ch_occ)[p] = 1.0;
    }

    if (state.holding >= 0) {
        double* held = plane(ch_held);
        for (int p = 0; p < px * px; ++p) held[p] = 1.0;
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Instances

int num_instances(const EpisodeState& state) {
    return static_cast<int>(state.layout.receptacles.size() + state.layout.objects.size());
}

const std::string& instance_class(const EpisodeState& s, int instance_id) {
    const int n_recep = static_cast<int>(s.layout.receptacles.size());
    if (instance_id < n_recep) return s.layout.receptacles[instance_id].cls;
    return s.layout.objects[instance_id - n_recep].cls;
}

Cell instance_cell(const EpisodeState& s, int instance_id) {
    const int n_recep = static_cast<int>(s.layout.receptacles.size());
    if (instance_id < n_recep) return s.layout.receptacles[instance_id].cell;
    const auto& loc = s.object_location[instance_id - n_recep];
    if (loc.on_floor) return loc.cell;
    return s.layout.receptacles[loc.receptacle].cell;
}

std::vector<MaskInstance> ground_truth_instances(const EpisodeState& state, const std::string& cls) {
    int id = state.spec->class_id(cls);
    if (id < 0) throw std::invalid_argument("unknown class name: " + cls);
    Raster ra = rasterize(state);
    return extract_instances(state, ra, id, /*apply_noise=*/true);
}

std::vector<MaskInstance> all_visible_instances(const EpisodeState& state) {
    Raster ra = rasterize(state);
    return extract_instances(state, ra, -1, /*apply_noise=*/false);
}

// ---------------------------------------------------------------------------
// Step

int resolve_interaction_mask(const EpisodeState& s, const PixelMask& mask) {
    const auto instances = all_visible_instances(s);
    int best = -1;
    size_t best_overlap = 0;
    for (const auto& mi : instances) {
        size_t overlap = 0;
        const size_t n = std::min(mask.size(), mi.mask.size());
        for (size_t p = 0; p < n; ++p)
            if (mask[p] && mi.mask[p]) ++overlap;
        if (overlap > best_overlap) {
            best_overlap = overlap;
            best = mi.instance_id;
        }
    }
    return best;
}

namespace {

int objects_in_receptacle(const EpisodeState& s, int rec) {
    int n = 0;
    for (size_t o = 0; o < s.object_location.size(); ++o) {
        if (static_cast<int>(o) == s.holding) continue;
        if (!s.object_location[o].on_floor && s.object_location[o].receptacle == rec) ++n;
    }
    return n;
}

int free_slot(const EpisodeState& s, int rec) {
    const int cap = s.layout.receptacles[rec].capacity;
    for (int slot = 0; slot < cap; ++slot) {
        bool used = false;
        for (size_t o = 0; o < s.object_location.size(); ++o) {
            if (static_cast<int>(o) == s.holding) continue;
            const auto& loc = s.object_location[o];
            if (!loc.on_floor && loc.receptacle == rec && loc.slot == slot) {
                used = true;
                break;
            }
        }
        if (!used) return slot;
    }
    return -1;
}

StepEvent apply_interaction(EpisodeState& s, const Action& a) {
    const int target = resolve_interaction_mask(s, a.mask);
    if (target < 0) return StepEvent::ApiFail;
    const Cell ahead = s.ahead();
    if (!(instance_cell(s, target) == ahead)) return StepEvent::ApiFail;

    const int n_recep = static_cast<int>(s.layout.receptacles.size());
    const bool is_recep = target < n_recep;
    const int obj = is_recep ? -1 : target - n_recep;
    const int rec = is_recep ? target : -1;

    switch (a.tag) {
        case ActionTag::Pickup: {
            if (is_recep || s.holding >= 0) return StepEvent::ApiFail;
            s.holding = obj;
            s.object_location[obj] = {false, {}, -1, 0};
            return StepEvent::Ok;
        }
        case ActionTag::Put: {
            if (!is_recep || s.holding < 0) return StepEvent::ApiFail;
            const auto& rs = s.layout.receptacles[rec];
            if (rs.openable && !s.open_state[rec]) return StepEvent::ApiFail;
            if (objects_in_receptacle(s, rec) >= rs.capacity) return StepEvent::ApiFail;
            const int slot = free_slot(s, rec);
            if (slot < 0) return StepEvent::ApiFail;
            s.object_location[s.holding] = {false, {}, rec, slot};
            s.holding = -1;
            return StepEvent::Ok;
        }
        case ActionTag::Open: {
            if (!is_recep || !s.layout.receptacles[rec].openable || s.open_state[rec]) return StepEvent::ApiFail;
            s.open_state[rec] = 1;
            return StepEvent::Ok;
        }
        case ActionTag::Close: {
            if (!is_recep || !s.layout.receptacles[rec].openable || !s.open_state[rec]) return StepEvent::ApiFail;
            s.open_state[rec] = 0;
            return StepEvent::Ok;
        }
        case ActionTag::ToggleOn: {
            if (!is_recep || !s.layout.receptacles[rec].toggleable || s.on_state[rec]) return StepEvent::ApiFail;
            s.on_state[rec] = 1;
            return StepEvent::Ok;
        }
        case ActionTag::ToggleOff: {
            if (!is_recep || !s.layout.receptacles[rec].toggleable || !s.on_state[rec]) return StepEvent::ApiFail;
            s.on_state[rec] = 0;
            return StepEvent::Ok;
        }
        case ActionTag::Slice: {
            if (is_recep) return StepEvent::ApiFail;
            if (s.holding < 0 || s.layout.objects[s.holding].cls != s.spec->knife_class)
                return StepEvent::ApiFail;
            if (!s.layout.objects[obj].sliceable || s.sliced[obj]) return StepEvent::ApiFail;
            s.sliced[obj] = 1;
            return StepEvent::Ok;
        }
        default:
            return StepEvent::ApiFail;
    }
}

}  // namespace

StepEvent step(EpisodeState& state, const Action& action) {
    if (state.terminated) throw std::logic_error("step called on a terminated episode");

    StepEvent ev = StepEvent::Ok;
    switch (action.tag) {
        case ActionTag::MoveAhead: {
            const Cell ahead = state.ahead();
            if (state.layout.walkable(ahead.x, ahead.y)) {
                state.pose.x = ahead.x;
                state.pose.y = ahead.y;
            } else {
                ev = StepEvent::Blocked;
            }
            break;
        }
        case ActionTag::RotateRight:
            state.pose.heading = static_cast<Heading>((static_cast<int>(state.pose.heading) + 1) % 4);
            break;
        case ActionTag::RotateLeft:
            state.pose.heading = static_cast<Heading>((static_cast<int>(state.pose.heading) + 3) % 4);
            break;
        case ActionTag::LookUp:
            state.pose.pitch = std::min(state.pose.pitch + 1, 1);
            break;
        case ActionTag::LookDown:
            state.pose.pitch = std::max(state.pose.pitch - 1, -1);
            break;
        case ActionTag::Stop:
            state.terminated = true;
            ev = StepEvent::Done;
            break;
        default:
            ev = apply_interaction(state, action);
            break;
    }
    state.step_count += 1;
    return ev;
}

// ---------------------------------------------------------------------------
// Goal checking

GoalCheck check_goal(const EpisodeState& state, const GoalSpec& goal) {
    GoalCheck gc;
    auto in_count = [&](const std::string& obj_cls, const std::string& rec_cls) {
        int n = 0;
        for (size_t o = 0; o < state.object_location.size(); ++o) {
            if (static_cast<int>(o) == state.holding) continue;
            if (state.layout.objects[o].cls != obj_cls) continue;
            const auto& loc = state.object_location[o];
            if (!loc.on_floor && loc.receptacle >= 0 &&
                state.layout.receptacles[loc.receptacle].cls == rec_cls)
                ++n;
        }
        return n;
    };

    for (const auto& c : goal.conditions) {
        switch (c.kind) {
            case Condition::Kind::In:
                gc.total += 1;
                if (in_count(c.object_class, c.receptacle_class) >= 1) gc.satisfied += 1;
                break;
            case Condition::Kind::Sliced: {
                gc.total += 1;
                bool any = false;
                for (size_t o = 0; o < state.layout.objects.size(); ++o)
                    if (state.layout.objects[o].cls == c.object_class && state.sliced[o]) any = true;
                if (any) gc.satisfied += 1;
                break;
            }
            case Condition::Kind::Toggled: {
                gc.total += 1;
                bool any = false;
                for (size_t r = 0; r < state.layout.receptacles.size(); ++r)
                    if (state.layout.receptacles[r].cls == c.receptacle_class && state.on_state[r]) any = true;
                if (any) gc.satisfied += 1;
                break;
            }
            case Condition::Kind::Holding:
                gc.total += 1;
                if (state.holding >= 0 && state.layout.objects[state.holding].cls == c.object_class)
                    gc.satisfied += 1;
                break;
            case Condition::Kind::CountIn:
                gc.total += c.count;
                gc.satisfied += std::min(in_count(c.object_class, c.receptacle_class), c.count);
                break;
        }
    }
    gc.task_success = gc.total > 0 && gc.satisfied == gc.total;
    return gc;
}

// ---------------------------------------------------------------------------
// Layout generation

json GeneratorConfig::to_json() const {
    return {{"width", width},
            {"height", height},
            {"train_arrangements", train_arrangements},
            {"unseen_arrangements", unseen_arrangements},
            {"arrangement_pool_seed", arrangement_pool_seed},
            {"min_objects", min_objects},
            {"max_objects", max_objects},
            {"version", version}};
}

GeneratorConfig GeneratorConfig::from_json(const json& j) {
    GeneratorConfig c;
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.train_arrangements = j.value("train_arrangements", c.train_arrangements);
    c.unseen_arrangements = j.value("unseen_arrangements", c.unseen_arrangements);
    c.arrangement_pool_seed = j.value("arrangement_pool_seed", c.arrangement_pool_seed);
    c.min_objects = j.value("min_objects", c.min_objects);
    c.max_objects = j.value("max_objects", c.max_objects);
    c.version = j.value("version", c.version);
    return c;
}

namespace {

struct Arrangement {
    std::vector<Cell> walls;
    std::vector<ReceptacleSpec> receptacles;
};

bool arrangement_ok(const Arrangement& arr, int width, int height, int min_free) {
    Layout probe;
    probe.width = width;
    probe.height = height;
    probe.walls = arr.walls;
    probe.receptacles = arr.receptacles;

    std::vector<Cell> free_cells;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (probe.walkable(x, y)) free_cells.push_back({x, y});
    if (static_cast<int>(free_cells.size()) < min_free) return false;

    // flood fill from the first free cell
    std::vector<uint8_t> seen(static_cast<size_t>(width) * height, 0);
    std::vector<Cell> stack{free_cells[0]};
    seen[static_cast<size_t>(free_cells[0].y) * width + free_cells[0].x] = 1;
    size_t reached = 0;
    while (!stack.empty()) {
        Cell c = stack.back();
        stack.pop_back();
        ++reached;
        const int dx[] = {1, -1, 0, 0};
        const int dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            int nx = c.x + dx[k], ny = c.y + dy[k];
            if (probe.walkable(nx, ny) && !seen[static_cast<size_t>(ny) * width + nx]) {
                seen[static_cast<size_t>(ny) * width + nx] = 1;
                stack.push_back({nx, ny});
            }
        }
    }
    if (reached != free_cells.size()) return false;

    // every receptacle must be reachable from the walkable component
    for (const auto& r : arr.receptacles) {
        bool adjacent = false;
        const int dx[] = {1, -1, 0, 0};
        const int dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            int nx = r.cell.x + dx[k], ny = r.cell.y + dy[k];
            if (probe.in_bounds(nx, ny) && probe.walkable(nx, ny) &&
                seen[static_cast<size_t>(ny) * width + nx])
                adjacent = true;
        }
        if (!adjacent) return false;
    }
    return true;
}

Arrangement make_arrangement(const GeneratorConfig& cfg, const WorldSpec& spec, int arr_id) {
    Rng rng(derive_seed(cfg.arrangement_pool_seed, cfg.version + ":arrangement", static_cast<uint64_t>(arr_id)));

    for (int attempt = 0; attempt < 200; ++attempt) {
        Arrangement arr;
        for (int x = 0; x < cfg.width; ++x) {
            arr.walls.push_back({x, 0});
            arr.walls.push_back({x, cfg.height - 1});
        }
        for (int y = 1; y < cfg.height - 1; ++y) {
            arr.walls.push_back({0, y});
            arr.walls.push_back({cfg.width - 1, y});
        }

        const int n_seg = rng.next_int(1, 2);
        for (int sgt = 0; sgt < n_seg; ++sgt) {
            const bool horizontal = rng.next_bool();
            const int len = rng.next_int(2, 3);
            const int x0 = rng.next_int(2, cfg.width - 3 - (horizontal ? len : 0));
            const int y0 = rng.next_int(2, cfg.height - 3 - (horizontal ? 0 : len));
            for (int k = 0; k < len; ++k)
                arr.walls.push_back({x0 + (horizontal ? k : 0), y0 + (horizontal ? 0 : k)});
        }

        std::vector<std::string> classes = {"table", "counter", "lamp"};
        std::vector<std::string> openables = {"drawer", "cabinet", "fridge"};
        rng.shuffle(openables);
        classes.push_back(openables[0]);
        classes.push_back(openables[1]);
        if (rng.next_bool()) {
            std::vector<std::string> dup_pool = {openables[0], openables[1], "table"};
            classes.push_back(rng.choice(dup_pool));
        }

        Layout probe;
        probe.width = cfg.width;
        probe.height = cfg.height;
        probe.walls = arr.walls;

        bool placed_all = true;
        std::vector<Cell> used;
        for (const auto& cls : classes) {
            Cell cell;
            bool found = false;
            for (int tries = 0; tries < 60 && !found; ++tries) {
                cell = {rng.next_int(1, cfg.width - 2), rng.next_int(1, cfg.height - 2)};
                if (probe.is_wall(cell.x, cell.y)) continue;
                if (std::find(used.begin(), used.end(), cell) != used.end()) continue;
                found = true;
            }
            if (!found) {
                placed_all = false;
                break;
            }
            used.push_back(cell);
            int rci = spec.receptacle_class_index(cls);
            ReceptacleSpec rs;
            rs.cls = cls;
            rs.cell = cell;
            rs.openable = spec.receptacle_openable[rci] != 0;
            rs.toggleable = spec.receptacle_toggleable[rci] != 0;
            rs.capacity = rs.toggleable ? 1 : (rs.openable ? 2 : 3);
            arr.receptacles.push_back(rs);
        }
        if (!placed_all) continue;

        if (arrangement_ok(arr, cfg.width, cfg.height, /*min_free=*/18)) return arr;
    }
    throw std::runtime_error("layout generator: could not build a connected arrangement");
}

}  // namespace

Layout generate_layout(uint64_t seed, Split split, const GeneratorConfig& cfg, const WorldSpec& spec) {
    const bool unseen = split == Split::UnseenEval;
    const int pool = unseen ? cfg.unseen_arrangements : cfg.train_arrangements;
    const int base = unseen ? cfg.train_arrangements : 0;
    const uint64_t pick = derive_seed(seed, std::string("arrangement-pick:") + split_name(split));
    const int arr_id = base + static_cast<int>(pick % static_cast<uint64_t>(pool));

    Arrangement arr = make_arrangement(cfg, spec, arr_id);

    Layout layout;
    layout.width = cfg.width;
    layout.height = cfg.height;
    layout.walls = arr.walls;
    layout.receptacles = arr.receptacles;
    layout.seed = seed;
    layout.arrangement_id = arr_id;
    layout.generator_version = cfg.version;

    // free floor cells and surface slots limit how many objects fit
    std::vector<Cell> floor_cells;
    for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x)
            if (layout.walkable(x, y)) floor_cells.push_back({x, y});
    int surface_slots = 0;
    for (const auto& r : layout.receptacles)
        if (!r.openable && !r.toggleable) surface_slots += r.capacity;
    if (cfg.max_objects > static_cast<int>(floor_cells.size()) + surface_slots)
        throw std::invalid_argument("generator config: object count exceeds available placements");

    Rng rng(derive_seed(seed, std::string("objects:") + split_name(split)));

    const int n_objects = rng.next_int(cfg.min_objects, cfg.max_objects);
    std::vector<std::string> roster;
    roster.push_back(spec.knife_class);
    std::vector<std::string> sliceables;
    for (int i = 0; i < spec.num_object_classes(); ++i)
        if (spec.object_sliceable[i]) sliceables.push_back(spec.object_classes[i]);
    roster.push_back(rng.choice(sliceables));

    std::vector<std::string> others;
    for (const auto& c : spec.object_classes)
        if (c != spec.knife_class) others.push_back(c);
    // duplicated class for pick-two tasks
    std::vector<std::string> dup_pool;
    for (const auto& c : spec.object_classes)
        if (c != spec.knife_class) dup_pool.push_back(c);
    const std::string dup_cls = rng.choice(dup_pool);
    roster.push_back(dup_cls);
    if (std::count(roster.begin(), roster.end(), dup_cls) < 2) roster.push_back(dup_cls);

    rng.shuffle(others);
    for (const auto& c : others) {
        if (static_cast<int>(roster.size()) >= n_objects) break;
        if (std::find(roster.begin(), roster.end(), c) == roster.end()) roster.push_back(c);
    }

    // surface placement slots: (receptacle index, slot)
    std::vector<std::pair<int, int>> surface;
    for (size_t r = 0; r < layout.receptacles.size(); ++r) {
        const auto& rs = layout.receptacles[r];
        if (!rs.openable && !rs.toggleable)
            for (int slot = 0; slot < rs.capacity; ++slot) surface.emplace_back(static_cast<int>(r), slot);
    }
    rng.shuffle(floor_cells);
    rng.shuffle(surface);
    size_t floor_next = 0, surface_next = 0;

    for (const auto& cls : roster) {
        ObjectSpec o;
        o.cls = cls;
        o.sliceable = spec.object_sliceable[spec.object_class_index(cls)] != 0;
        o.color = {static_cast<double>(rng.next_int(30, 255)) / 255.0,
                   static_cast<double>(rng.next_int(30, 255)) / 255.0,
                   static_cast<double>(rng.next_int(30, 255)) / 255.0};
        const bool prefer_floor = rng.next_double() < 0.65;
        if ((prefer_floor && floor_next < floor_cells.size()) || surface_next >= surface.size()) {
            o.on_floor = true;
            o.cell = floor_cells[floor_next++];
        } else {
            o.on_floor = false;
            o.receptacle = surface[surface_next].first;
            o.slot = surface[surface_next].second;
            ++surface_next;
        }
        layout.objects.push_back(o);
    }

    layout.validate(spec);
    return layout;
}

}  // namespace gridagent
