// ihcscore command-line tool: tile cutting, dataset split, keypoint
// extraction/fusion/rendering, H-score reports, threshold calibration,
// detector evaluation, and the synthetic oracle generator. All pipeline
// operations go through the ihcscore C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "ihcscore.h"
#include "kvconfig.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitInput = 2;       // missing/malformed inputs
constexpr int kExitConstraint = 3;  // violated precondition or budget

struct ExitException {
    int code;
    std::string message;
};

void check(ihc_status st) {
    if (st == IHC_OK) return;
    const int code =
        (st == IHC_ERROR_IO || st == IHC_ERROR_PARSE) ? kExitInput : kExitConstraint;
    throw ExitException{code, ihc_last_error()};
}

[[noreturn]] void fail_input(const std::string& message) {
    throw ExitException{kExitInput, message};
}

struct ImageDeleter {
    void operator()(ihc_image* p) const { ihc_image_free(p); }
};
struct HeatmapDeleter {
    void operator()(ihc_heatmap* p) const { ihc_heatmap_free(p); }
};
struct KeypointsDeleter {
    void operator()(ihc_keypoints* p) const { ihc_keypoints_free(p); }
};
struct ProfileDeleter {
    void operator()(ihc_profile* p) const { ihc_profile_free(p); }
};
using ImagePtr = std::unique_ptr<ihc_image, ImageDeleter>;
using HeatmapPtr = std::unique_ptr<ihc_heatmap, HeatmapDeleter>;
using KeypointsPtr = std::unique_ptr<ihc_keypoints, KeypointsDeleter>;
using ProfilePtr = std::unique_ptr<ihc_profile, ProfileDeleter>;

ImagePtr load_image(const std::string& path) {
    ihc_image* img = nullptr;
    check(ihc_image_load(path.c_str(), &img));
    return ImagePtr(img);
}

KeypointsPtr load_keypoints(const std::string& path) {
    ihc_keypoints* table = nullptr;
    check(ihc_keypoints_load(path.c_str(), &table));
    return KeypointsPtr(table);
}

KeypointsPtr new_keypoints() {
    ihc_keypoints* table = nullptr;
    check(ihc_keypoints_create(&table));
    return KeypointsPtr(table);
}

struct Row {
    std::string slide_id;
    std::string tile_id;
    ihc_keypoint kp;
};

std::vector<Row> rows_of(const ihc_keypoints* table) {
    std::vector<Row> rows;
    const size_t n = ihc_keypoints_count(table);
    rows.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Row row;
        const char* slide = nullptr;
        const char* tile = nullptr;
        check(ihc_keypoints_get(table, i, &row.kp, &slide, &tile));
        row.slide_id = slide;
        row.tile_id = tile;
        rows.push_back(std::move(row));
    }
    return rows;
}

using TileKey = std::pair<std::string, std::string>;

std::map<TileKey, std::vector<Row>> group_rows(const std::vector<Row>& rows) {
    std::map<TileKey, std::vector<Row>> groups;
    for (const Row& row : rows) groups[{row.slide_id, row.tile_id}].push_back(row);
    return groups;
}

KeypointsPtr table_of(const std::vector<Row>& rows) {
    KeypointsPtr table = new_keypoints();
    for (const Row& row : rows)
        check(ihc_keypoints_append(table.get(), row.slide_id.c_str(), row.tile_id.c_str(),
                                   &row.kp));
    return table;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail_input("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail_input("cannot write " + path.string());
    out << content;
    if (!out) fail_input("short write: " + path.string());
}

// Resolved-config sidecar for outputs whose format cannot embed it.
void write_meta(const fs::path& primary, const KvConfig& cfg) {
    std::string text = std::string("tool=") + ihc_version() + "\n" + cfg.echo();
    write_file(primary.string() + ".meta", text);
}

std::string echo_comment_block(const KvConfig& cfg) {
    std::ostringstream out;
    out << "# tool=" << ihc_version() << "\n";
    std::istringstream lines(cfg.echo());
    std::string line;
    while (std::getline(lines, line)) out << "# " << line << "\n";
    return out.str();
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    const unsigned workers = std::min<std::size_t>(threads, count);
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(count);
                    return;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// Shared per-command state resolved from --config/--set/--seed/--threads.
struct Shared {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::int64_t seed = -1;
    int threads = -1;

    KvConfig resolve() const {
        KvConfig cfg = KvConfig::defaults();
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const std::string& kv : sets) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos) fail_input("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed >= 0) cfg.set("pipeline.seed", std::to_string(seed));
        if (threads >= 0) cfg.set("pipeline.threads", std::to_string(threads));
        cfg.finalize();
        return cfg;
    }
};

void add_shared(CLI::App* cmd, Shared& shared, const std::string& default_out) {
    cmd->add_option("--config", shared.config_path, "key=value config file");
    cmd->add_option("--set", shared.sets, "override one config key (key=value)");
    cmd->add_option("--seed", shared.seed, "master seed (pipeline.seed)");
    cmd->add_option("--threads", shared.threads, "worker threads (pipeline.threads)");
    shared.out = default_out;
    cmd->add_option("--out", shared.out, "output path (default: " + default_out + ")");
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// ---------------------------------------------------------------- tile ----

struct TileArgs {
    Shared shared;
    std::string raster;
    double umpp = 0.0;
    std::string slide;
};

int cmd_tile(const TileArgs& args) {
    const KvConfig cfg = args.shared.resolve();
    const std::string slide = args.slide.empty() ? stem_of(args.raster) : args.slide;
    ImagePtr raster = load_image(args.raster);

    ihc_tileset* tiles = nullptr;
    check(ihc_cut_tiles(raster.get(), args.umpp, cfg.get_double("pipeline.tile_fov_um"),
                        static_cast<uint32_t>(cfg.get_int("pipeline.output_size_px")), &tiles));
    const std::unique_ptr<ihc_tileset, void (*)(ihc_tileset*)> tiles_guard(tiles,
                                                                           ihc_tileset_free);

    const fs::path out_dir = args.shared.out;
    const fs::path tile_dir = out_dir / "tiles";
    ensure_dir(tile_dir);

    const double mean_low = cfg.get_double("filter.mean_low");
    const double mean_high = cfg.get_double("filter.mean_high");
    const double std_min = cfg.get_double("filter.std_min");

    std::ostringstream manifest;
    manifest << echo_comment_block(cfg);
    manifest << "# tile_id\tslide_id\tstatus\treason\torigin_x\torigin_y\tum_per_px\tpath\n";
    std::size_t kept = 0, filtered = 0;
    for (size_t i = 0; i < ihc_tileset_count(tiles); ++i) {
        const ihc_image* tile = ihc_tileset_image(tiles, i);
        int64_t ox = 0, oy = 0;
        ihc_tileset_origin(tiles, i, &ox, &oy);
        const std::string tile_id =
            slide + "_x" + std::to_string(ox) + "_y" + std::to_string(oy);

        const int empty = ihc_image_is_empty_tile(tile, mean_low, mean_high, std_min);
        if (empty < 0) check(IHC_ERROR_INVALID_ARGUMENT);
        std::string reason = "-";
        if (empty == 1) {
            // Distinguish which filter triggered for the manifest.
            const int mean_out = ihc_image_is_empty_tile(tile, mean_low, mean_high, 0.0);
            reason = mean_out == 1 ? "mean_out_of_bounds" : "std<min";
        }

        std::string path = "-";
        if (empty == 0) {
            path = (tile_dir / (tile_id + ".png")).string();
            check(ihc_image_save_png(tile, path.c_str()));
            ++kept;
        } else {
            ++filtered;
        }
        manifest << tile_id << '\t' << slide << '\t' << (empty == 0 ? "kept" : "filtered")
                 << '\t' << reason << '\t' << ox << '\t' << oy << '\t' << args.umpp << '\t'
                 << path << '\n';
    }
    write_file(out_dir / "manifest.tsv", manifest.str());
    std::cout << "tiles: " << kept << " kept, " << filtered << " filtered\nmanifest: "
              << (out_dir / "manifest.tsv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- split ----

struct SplitArgs {
    Shared shared;
    std::string manifest;
    std::string ratios = "3:1:1";
};

int cmd_split(const SplitArgs& args) {
    const KvConfig cfg = args.shared.resolve();

    unsigned ratio[3] = {0, 0, 0};
    {
        std::istringstream in(args.ratios);
        char sep1 = 0, sep2 = 0;
        if (!(in >> ratio[0] >> sep1 >> ratio[1] >> sep2 >> ratio[2]) || sep1 != ':' ||
            sep2 != ':')
            fail_input("--ratios expects T:V:S, got '" + args.ratios + "'");
    }

    std::ifstream in(args.manifest);
    if (!in) fail_input("cannot open manifest: " + args.manifest);
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        // Rows filtered out by the tile stage are not part of the dataset.
        const std::size_t c1 = line.find('\t');
        const std::size_t c2 = c1 == std::string::npos ? c1 : line.find('\t', c1 + 1);
        if (c2 != std::string::npos) {
            const std::size_t c3 = line.find('\t', c2 + 1);
            const std::string status =
                line.substr(c2 + 1, (c3 == std::string::npos ? line.size() : c3) - c2 - 1);
            if (status == "filtered") continue;
        }
        rows.push_back(line);
    }
    if (rows.empty()) fail_input("manifest has no usable rows: " + args.manifest);

    std::vector<uint8_t> labels(rows.size());
    check(ihc_split_assign(rows.size(), ratio[0], ratio[1], ratio[2],
                           static_cast<uint64_t>(cfg.get_int("pipeline.seed")),
                           labels.data()));

    const fs::path out_dir = args.shared.out;
    ensure_dir(out_dir);
    const char* names[3] = {"train.tsv", "val.tsv", "test.tsv"};
    std::size_t counts[3] = {0, 0, 0};
    for (int part = 0; part < 3; ++part) {
        std::ostringstream out;
        out << echo_comment_block(cfg);
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (labels[i] == part) {
                out << rows[i] << '\n';
                ++counts[part];
            }
        write_file(out_dir / names[part], out.str());
    }
    std::cout << "split: " << counts[0] << " train, " << counts[1] << " val, " << counts[2]
              << " test\n";
    return 0;
}

// -------------------------------------------------------------- extract ----

struct ExtractArgs {
    Shared shared;
    std::vector<std::string> heatmaps;
    std::string slide = "slide";
};

int cmd_extract(const ExtractArgs& args) {
    const KvConfig cfg = args.shared.resolve();
    KeypointsPtr merged = new_keypoints();
    for (const std::string& path : args.heatmaps) {
        ihc_heatmap* hm = nullptr;
        check(ihc_heatmap_load(path.c_str(), &hm));
        const HeatmapPtr hm_guard(hm);
        ihc_keypoints* kps = nullptr;
        check(ihc_extract_keypoints(hm, cfg.get_double("extractor.threshold"),
                                    cfg.get_double("extractor.min_distance"),
                                    static_cast<int>(cfg.get_int("extractor.pool_size")),
                                    args.slide.c_str(), stem_of(path).c_str(), &kps));
        const KeypointsPtr kps_guard(kps);
        for (const Row& row : rows_of(kps))
            check(ihc_keypoints_append(merged.get(), row.slide_id.c_str(),
                                       row.tile_id.c_str(), &row.kp));
    }
    check(ihc_keypoints_save(merged.get(), args.shared.out.c_str()));
    write_meta(args.shared.out, cfg);
    std::cout << "extracted " << ihc_keypoints_count(merged.get()) << " keypoints from "
              << args.heatmaps.size() << " heatmaps -> " << args.shared.out << "\n";
    return 0;
}

// ----------------------------------------------------------------- fuse ----

struct FuseArgs {
    Shared shared;
    std::vector<std::string> inputs;
    std::vector<double> weights;
    double radius = -1.0;
};

int cmd_fuse(const FuseArgs& args) {
    const KvConfig cfg = args.shared.resolve();
    if (args.inputs.size() < 2) fail_input("fuse needs at least two --inputs");
    std::vector<double> weights = args.weights;
    if (weights.empty()) weights.assign(args.inputs.size(), 1.0);
    if (weights.size() != args.inputs.size())
        fail_input("--weights count must match --inputs count");

    std::vector<KeypointsPtr> tables;
    std::vector<const ihc_keypoints*> raw;
    for (const std::string& path : args.inputs) {
        tables.push_back(load_keypoints(path));
        raw.push_back(tables.back().get());
    }
    const double radius = args.radius >= 0.0 ? args.radius : cfg.get_double("fuse.radius");
    ihc_keypoints* fused = nullptr;
    check(ihc_fuse_keypoints(raw.data(), weights.data(), raw.size(), radius, &fused));
    const KeypointsPtr fused_guard(fused);
    check(ihc_keypoints_save(fused, args.shared.out.c_str()));
    write_meta(args.shared.out, cfg);
    std::cout << "fused " << args.inputs.size() << " sets -> " << args.shared.out << " ("
              << ihc_keypoints_count(fused) << " keypoints)\n";
    return 0;
}

// --------------------------------------------------------------- render ----

struct RenderArgs {
    Shared shared;
    std::string keypoints;
    int size = -1;
    double sigma = -1.0;
};

int cmd_render(const RenderArgs& args) {
    const KvConfig cfg = args.shared.resolve();
    const uint32_t size = args.size > 0
                              ? static_cast<uint32_t>(args.size)
                              : static_cast<uint32_t>(cfg.get_int("pipeline.output_size_px"));
    const double sigma = args.sigma > 0.0 ? args.sigma : cfg.get_double("render.sigma");

    const KeypointsPtr table = load_keypoints(args.keypoints);
    const auto groups = group_rows(rows_of(table.get()));
    const fs::path out_dir = args.shared.out;
    ensure_dir(out_dir);
    for (const auto& [key, rows] : groups) {
        const KeypointsPtr tile_table = table_of(rows);
        ihc_heatmap* hm = nullptr;
        check(ihc_render_heatmap(tile_table.get(), size, size, 2, sigma, &hm));
        const HeatmapPtr hm_guard(hm);
        const fs::path path = out_dir / (key.second + ".hmf1");
        check(ihc_heatmap_save(hm, path.string().c_str()));
    }
    write_meta(out_dir / "render", cfg);
    std::cout << "rendered " << groups.size() << " heatmaps -> " << out_dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- score ----

struct ScoreArgs {
    Shared shared;
    std::string tiles_dir;
    std::string keypoints;
    std::string profile;
};

int cmd_score(const ScoreArgs& args) {
    const KvConfig cfg = args.shared.resolve();
    ihc_profile* profile = nullptr;
    check(ihc_profile_load(args.profile.c_str(), &profile));
    const ProfilePtr profile_guard(profile);
    ihc_profile_set_brown_hue_ref(profile, cfg.get_double("stain.brown_hue_ref_deg"));

    const KeypointsPtr table = load_keypoints(args.keypoints);
    const auto groups = group_rows(rows_of(table.get()));
    std::vector<std::pair<TileKey, const std::vector<Row>*>> tiles;
    tiles.reserve(groups.size());
    for (const auto& [key, rows] : groups) tiles.emplace_back(key, &rows);

    std::vector<std::array<int64_t, 8>> per_tile(tiles.size());
    const unsigned threads = static_cast<unsigned>(cfg.get_int("pipeline.threads"));
    parallel_for(tiles.size(), threads, [&](std::size_t i) {
        const auto& [key, rows] = tiles[i];
        const fs::path path = fs::path(args.tiles_dir) / (key.second + ".png");
        ImagePtr image = load_image(path.string());
        const KeypointsPtr tile_table = table_of(*rows);
        std::array<int64_t, 8> counts{};
        const ihc_status st =
            ihc_classify_counts(image.get(), tile_table.get(), profile, counts.data());
        if (st != IHC_OK)
            throw ExitException{kExitConstraint, std::string(ihc_last_error()) + " [tile " +
                                                     key.first + "/" + key.second + "]"};
        per_tile[i] = counts;
    });

    int64_t pooled[8] = {0};
    for (const auto& counts : per_tile)
        for (int k = 0; k < 8; ++k) pooled[k] += counts[k];

    std::set<std::string> slide_set;
    for (const auto& [key, rows] : tiles) slide_set.insert(key.first);
    std::vector<std::string> slides(slide_set.begin(), slide_set.end());
    std::vector<const char*> slide_ptrs;
    for (const std::string& s : slides) slide_ptrs.push_back(s.c_str());

    char* report = nullptr;
    check(ihc_report_from_counts(pooled, profile, slide_ptrs.data(), slide_ptrs.size(),
                                 tiles.size(), cfg.echo_json().c_str(), &report));
    write_file(args.shared.out, report);
    const json doc = json::parse(report);
    ihc_string_free(report);

    for (const char* comp : {"stroma", "epithelium"}) {
        const auto& obj = doc["compartments"][comp];
        std::cout << comp << ": H-score ";
        if (obj["empty"].get<bool>())
            std::cout << "n/a (no nuclei)";
        else
            std::cout << obj["hscore"].get<double>();
        std::cout << "\n";
    }
    std::cout << "report: " << args.shared.out << "\n";
    return 0;
}

// ------------------------------------------------------------ calibrate ----

struct CalibrateArgs {
    Shared shared;
    std::string tiles_dir;
    std::string annotations;
    std::string predictions;
    std::string annotator = "annotator";
    std::string grid;
    double hue_split = -1.0;
    std::string loso_dir;
};

int cmd_calibrate(const CalibrateArgs& args) {
    const KvConfig cfg = args.shared.resolve();
    int grid_lo = static_cast<int>(cfg.get_int("calib.grid_lo"));
    int grid_hi = static_cast<int>(cfg.get_int("calib.grid_hi"));
    int grid_step = static_cast<int>(cfg.get_int("calib.grid_step"));
    if (!args.grid.empty()) {
        std::istringstream in(args.grid);
        char sep1 = 0, sep2 = 0;
        if (!(in >> grid_lo >> sep1 >> grid_hi >> sep2 >> grid_step) || sep1 != ':' ||
            sep2 != ':')
            fail_input("--grid expects lo:hi:step, got '" + args.grid + "'");
    }
    const double hue_split =
        args.hue_split >= 0.0 ? args.hue_split : cfg.get_double("stain.hue_split_deg");
    const int half_side = static_cast<int>(cfg.get_int("stain.nucleus_half_side_px"));
    const double brown_ref = cfg.get_double("stain.brown_hue_ref_deg");

    const KeypointsPtr annotated = load_keypoints(args.annotations);
    const KeypointsPtr predicted = load_keypoints(args.predictions);
    const auto annotated_groups = group_rows(rows_of(annotated.get()));
    auto predicted_groups = group_rows(rows_of(predicted.get()));

    std::vector<ImagePtr> images;
    std::vector<KeypointsPtr> tile_tables;
    std::vector<std::string> slide_ids;
    std::vector<ihc_calib_item> items;
    for (const auto& [key, rows] : annotated_groups) {
        const fs::path path = fs::path(args.tiles_dir) / (key.second + ".png");
        images.push_back(load_image(path.string()));
        tile_tables.push_back(table_of(rows));
        tile_tables.push_back(table_of(predicted_groups[key]));  // may be empty
        slide_ids.push_back(key.first);
        ihc_calib_item item;
        item.image = images.back().get();
        item.annotated = tile_tables[tile_tables.size() - 2].get();
        item.predicted = tile_tables[tile_tables.size() - 1].get();
        item.slide_id = nullptr;  // filled below once slide_ids stops reallocating
        items.push_back(item);
    }
    for (std::size_t i = 0; i < items.size(); ++i) items[i].slide_id = slide_ids[i].c_str();
    if (items.empty()) fail_input("no annotated tiles found in " + args.annotations);

    if (!args.loso_dir.empty()) {
        ihc_loso_result* loso = nullptr;
        check(ihc_calibrate_loso(items.data(), items.size(), args.annotator.c_str(), grid_lo,
                                 grid_hi, grid_step, hue_split, half_side, brown_ref, &loso));
        const std::unique_ptr<ihc_loso_result, void (*)(ihc_loso_result*)> guard(loso,
                                                                                 ihc_loso_free);
        ensure_dir(args.loso_dir);
        for (size_t i = 0; i < ihc_loso_count(loso); ++i) {
            const std::string slide = ihc_loso_slide_id(loso, i);
            const fs::path path =
                fs::path(args.loso_dir) / (args.annotator + "_holdout_" + slide + ".profile");
            check(ihc_profile_save(ihc_loso_profile(loso, i), path.string().c_str()));
            write_meta(path, cfg);
            std::cout << "holdout " << slide << ": left="
                      << ihc_profile_value_left(ihc_loso_profile(loso, i))
                      << " right=" << ihc_profile_value_right(ihc_loso_profile(loso, i))
                      << " objective=" << ihc_profile_objective(ihc_loso_profile(loso, i))
                      << "\n";
        }
        return 0;
    }

    ihc_profile* profile = nullptr;
    check(ihc_calibrate(items.data(), items.size(), args.annotator.c_str(), grid_lo, grid_hi,
                        grid_step, hue_split, half_side, brown_ref, &profile));
    const ProfilePtr profile_guard(profile);
    check(ihc_profile_save(profile, args.shared.out.c_str()));
    write_meta(args.shared.out, cfg);
    std::cout << "calibrated " << args.annotator << ": left=" << ihc_profile_value_left(profile)
              << " right=" << ihc_profile_value_right(profile)
              << " objective=" << ihc_profile_objective(profile) << "\nprofile: "
              << args.shared.out << "\n";
    return 0;
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
    Shared shared;
    std::string pred;
    std::string pred2;
    std::string gt;
};

int cmd_eval(const EvalArgs& args) {
    const KvConfig cfg = args.shared.resolve();
    const KeypointsPtr pred = load_keypoints(args.pred);
    const KeypointsPtr gt = load_keypoints(args.gt);
    KeypointsPtr pred2;
    if (!args.pred2.empty()) pred2 = load_keypoints(args.pred2);

    ihc_eval_config eval_cfg;
    eval_cfg.match_radius = cfg.get_double("eval.match_radius");
    eval_cfg.batch_size = static_cast<size_t>(cfg.get_int("eval.batch_size"));
    eval_cfg.bootstrap_resamples = static_cast<size_t>(cfg.get_int("bootstrap.resamples"));
    eval_cfg.bootstrap_outer_repeats =
        static_cast<size_t>(cfg.get_int("bootstrap.outer_repeats"));
    eval_cfg.bootstrap_confidence = cfg.get_double("bootstrap.confidence");
    eval_cfg.seed = static_cast<uint64_t>(cfg.get_int("pipeline.seed"));

    char* report = nullptr;
    check(ihc_evaluate(pred.get(), pred2 ? pred2.get() : nullptr, gt.get(), &eval_cfg,
                       cfg.echo_json().c_str(), &report));
    write_file(args.shared.out, report);
    const json doc = json::parse(report);
    ihc_string_free(report);

    for (const auto& cls : doc["excluded_classes"])
        std::cerr << "warning: no ground truth for class '" << cls.get<std::string>()
                  << "'; excluded from mAP\n";
    std::cout << "mAP: " << doc["metrics"]["map"].get<double>() << "\n";
    if (doc.contains("ci_table")) std::cout << doc["ci_table"].get<std::string>();
    std::cout << "report: " << args.shared.out << "\n";
    return 0;
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
    Shared shared;
    int slides = 1;
    int tiles = 1;
    int nuclei = 30;
    int size = 256;
    double stroma_fraction = 0.5;
    std::string class_mix = "0.25,0.25,0.25,0.25";
};

int cmd_synth(const SynthArgs& args) {
    const KvConfig cfg = args.shared.resolve();
    double mix[4] = {0, 0, 0, 0};
    {
        std::istringstream in(args.class_mix);
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(in >> mix[0] >> c1 >> mix[1] >> c2 >> mix[2] >> c3 >> mix[3]) || c1 != ',' ||
            c2 != ',' || c3 != ',')
            fail_input("--class-mix expects four comma-separated fractions");
    }

    const fs::path out_dir = args.shared.out;
    const fs::path tile_dir = out_dir / "tiles";
    ensure_dir(tile_dir);

    KeypointsPtr all_kps = new_keypoints();
    std::ostringstream expected;
    expected << echo_comment_block(cfg);
    expected << "# kind\tslide_id\ttile_id\ts_none\ts_weak\ts_moderate\ts_strong\te_none\t"
                "e_weak\te_moderate\te_strong\thscore_stroma\thscore_epithelium\n";

    const uint64_t master = static_cast<uint64_t>(cfg.get_int("pipeline.seed"));
    auto h_text = [](double h) {
        if (std::isnan(h)) return std::string("NA");
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof(buf), h);
        return std::string(buf, res.ptr);
    };

    for (int s = 0; s < args.slides; ++s) {
        const std::string slide_id = "synth" + std::to_string(s);
        int64_t slide_counts[8] = {0};
        for (int t = 0; t < args.tiles; ++t) {
            const std::string tile_id = slide_id + "_t" + std::to_string(t);
            ihc_synth_spec spec;
            ihc_synth_spec_init(&spec);
            spec.tile_size = static_cast<uint32_t>(args.size);
            spec.nuclei = static_cast<size_t>(args.nuclei);
            spec.stroma_fraction = args.stroma_fraction;
            for (int k = 0; k < 4; ++k) spec.class_mix[k] = mix[k];
            spec.seed = master + 7919ULL * static_cast<uint64_t>(s) + static_cast<uint64_t>(t);

            ihc_synth* synth = nullptr;
            check(ihc_synth_generate(&spec, slide_id.c_str(), tile_id.c_str(), &synth));
            const std::unique_ptr<ihc_synth, void (*)(ihc_synth*)> guard(synth, ihc_synth_free);

            const fs::path png = tile_dir / (tile_id + ".png");
            check(ihc_image_save_png(ihc_synth_image(synth), png.string().c_str()));

            const ihc_keypoints* kps = ihc_synth_keypoints(synth);
            for (const Row& row : rows_of(kps))
                check(ihc_keypoints_append(all_kps.get(), row.slide_id.c_str(),
                                           row.tile_id.c_str(), &row.kp));

            int64_t counts[8];
            double hs[2];
            ihc_synth_expected(synth, counts, hs);
            for (int k = 0; k < 8; ++k) slide_counts[k] += counts[k];
            expected << "tile\t" << slide_id << '\t' << tile_id;
            for (int k = 0; k < 8; ++k) expected << '\t' << counts[k];
            expected << '\t' << h_text(hs[0]) << '\t' << h_text(hs[1]) << '\n';
        }
        double slide_h[2];
        for (int c = 0; c < 2; ++c) {
            double h = std::nan("");
            if (ihc_hscore(slide_counts + c * 4, &h) != IHC_OK) h = std::nan("");
            slide_h[c] = h;
        }
        expected << "slide\t" << slide_id << "\t-";
        for (int k = 0; k < 8; ++k) expected << '\t' << slide_counts[k];
        expected << '\t' << h_text(slide_h[0]) << '\t' << h_text(slide_h[1]) << '\n';
    }

    check(ihc_keypoints_save(all_kps.get(), (out_dir / "keypoints.tsv").string().c_str()));
    write_meta(out_dir / "keypoints.tsv", cfg);
    write_file(out_dir / "expected.txt", expected.str());

    ihc_profile* reference = nullptr;
    check(ihc_reference_profile(&reference));
    const ProfilePtr ref_guard(reference);
    check(ihc_profile_save(reference, (out_dir / "reference.profile").string().c_str()));

    std::cout << "synth: " << args.slides << " slides x " << args.tiles << " tiles -> "
              << out_dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("ihcscore ") + ihc_version() +
                 " - IHC nucleus detection post-processing and H-score pipeline"};
    app.require_subcommand(1);

    TileArgs tile_args;
    CLI::App* tile = app.add_subcommand("tile", "cut a raster into micron-calibrated tiles");
    tile->add_option("--raster", tile_args.raster, "input PNG/TIFF raster")->required();
    tile->add_option("--umpp", tile_args.umpp, "microns per pixel of the raster")->required();
    tile->add_option("--slide", tile_args.slide, "slide id (default: raster stem)");
    add_shared(tile, tile_args.shared, "tile_out");

    SplitArgs split_args;
    CLI::App* split = app.add_subcommand("split", "deterministic train/val/test partition");
    split->add_option("--manifest", split_args.manifest, "tile manifest")->required();
    split->add_option("--ratios", split_args.ratios, "partition ratios (default 3:1:1)");
    add_shared(split, split_args.shared, "split_out");

    ExtractArgs extract_args;
    CLI::App* extract = app.add_subcommand("extract", "heatmaps -> keypoint TSV");
    extract->add_option("heatmaps", extract_args.heatmaps, "HMF1 heatmap files")->required();
    extract->add_option("--slide", extract_args.slide, "slide id for the output rows");
    add_shared(extract, extract_args.shared, "keypoints.tsv");

    FuseArgs fuse_args;
    CLI::App* fuse = app.add_subcommand("fuse", "weighted fusion of keypoint sets");
    fuse->add_option("--inputs", fuse_args.inputs, "keypoint TSVs, one per model")->required();
    fuse->add_option("--weights", fuse_args.weights, "model weights (default: all 1)");
    fuse->add_option("--radius", fuse_args.radius, "fusion radius in px (default from config)");
    add_shared(fuse, fuse_args.shared, "fused.tsv");

    RenderArgs render_args;
    CLI::App* render = app.add_subcommand("render", "keypoint TSV -> gaussian heatmaps");
    render->add_option("--keypoints", render_args.keypoints, "keypoint TSV")->required();
    render->add_option("--size", render_args.size, "heatmap side in px (default from config)");
    render->add_option("--sigma", render_args.sigma, "gaussian sigma in px (default from config)");
    add_shared(render, render_args.shared, "render_out");

    ScoreArgs score_args;
    CLI::App* score = app.add_subcommand("score", "H-score report for tiles + keypoints");
    score->add_option("--tiles", score_args.tiles_dir, "directory with <tile_id>.png")
        ->required();
    score->add_option("--keypoints", score_args.keypoints, "keypoint TSV")->required();
    score->add_option("--profile", score_args.profile, "stain profile file")->required();
    add_shared(score, score_args.shared, "hscore_report.json");

    CalibrateArgs calibrate_args;
    CLI::App* calibrate = app.add_subcommand("calibrate", "grid-search stain thresholds");
    calibrate->add_option("--tiles", calibrate_args.tiles_dir, "directory with <tile_id>.png")
        ->required();
    calibrate
        ->add_option("--annotations", calibrate_args.annotations,
                     "pathologist keypoint TSV with stain labels")
        ->required();
    calibrate->add_option("--predictions", calibrate_args.predictions, "model keypoint TSV")
        ->required();
    calibrate->add_option("--annotator", calibrate_args.annotator, "annotator id");
    calibrate->add_option("--grid", calibrate_args.grid, "lo:hi:step (default from config)");
    calibrate->add_option("--hue-split", calibrate_args.hue_split,
                          "blue/brown hue split in degrees");
    calibrate->add_option("--loso", calibrate_args.loso_dir,
                          "leave-one-slide-out: write per-slide profiles here");
    add_shared(calibrate, calibrate_args.shared, "calibrated.profile");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "keypoint mAP and paired bootstrap CI");
    eval->add_option("--pred", eval_args.pred, "prediction TSV")->required();
    eval->add_option("--pred2", eval_args.pred2, "second prediction TSV (paired CI)");
    eval->add_option("--gt", eval_args.gt, "ground-truth TSV")->required();
    add_shared(eval, eval_args.shared, "eval_report.json");

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "synthetic oracle tiles");
    synth->add_option("--slides", synth_args.slides, "number of synthetic slides");
    synth->add_option("--tiles", synth_args.tiles, "tiles per slide");
    synth->add_option("--nuclei", synth_args.nuclei, "nuclei per tile");
    synth->add_option("--size", synth_args.size, "tile side in px");
    synth->add_option("--stroma-fraction", synth_args.stroma_fraction, "stroma share");
    synth->add_option("--class-mix", synth_args.class_mix,
                      "none,weak,moderate,strong fractions");
    add_shared(synth, synth_args.shared, "synth_out");

    try {
        app.parse(argc, argv);
        if (tile->parsed()) return cmd_tile(tile_args);
        if (split->parsed()) return cmd_split(split_args);
        if (extract->parsed()) return cmd_extract(extract_args);
        if (fuse->parsed()) return cmd_fuse(fuse_args);
        if (render->parsed()) return cmd_render(render_args);
        if (score->parsed()) return cmd_score(score_args);
        if (calibrate->parsed()) return cmd_calibrate(calibrate_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (synth->parsed()) return cmd_synth(synth_args);
        return kExitInput;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kExitInput;
    } catch (const ExitException& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConstraint;
    }
}
