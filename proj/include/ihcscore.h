/* ihcscore C API: IHC nucleus H-score quantification pipeline.
 *
 * All objects are opaque handles created and destroyed by this library.
 * Functions return ihc_status; on failure ihc_last_error() gives a
 * thread-local description of the most recent error on the calling thread.
 * Output handles are written only on IHC_OK. The library is thread-safe for
 * concurrent calls on distinct objects.
 */
#ifndef IHCSCORE_H
#define IHCSCORE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define IHC_API __declspec(dllexport)
#else
#define IHC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ihc_status {
    IHC_OK = 0,
    IHC_ERROR_INVALID_ARGUMENT = 1, /* violated precondition or domain error */
    IHC_ERROR_IO = 2,               /* filesystem failure */
    IHC_ERROR_PARSE = 3,            /* malformed input file */
    IHC_ERROR_CAPACITY = 4,         /* attempt/resource budget exhausted */
    IHC_ERROR_INTERNAL = 5
} ihc_status;

/* Compartment classes (heatmap channel order and TSV `class` column). */
enum { IHC_CLASS_STROMA = 0, IHC_CLASS_EPITHELIUM = 1 };

/* Stain classes (H-score weights). */
enum { IHC_STAIN_NONE = 0, IHC_STAIN_WEAK = 1, IHC_STAIN_MODERATE = 2, IHC_STAIN_STRONG = 3 };

typedef struct ihc_image ihc_image;
typedef struct ihc_heatmap ihc_heatmap;
typedef struct ihc_keypoints ihc_keypoints; /* a table of keypoint rows */
typedef struct ihc_profile ihc_profile;
typedef struct ihc_synth ihc_synth;

IHC_API const char* ihc_version(void);
IHC_API const char* ihc_last_error(void);
IHC_API void ihc_string_free(char* s);

/* ---- images ------------------------------------------------------------ */

IHC_API ihc_status ihc_image_load(const char* path, ihc_image** out);
IHC_API ihc_status ihc_image_save_png(const ihc_image* image, const char* path);
IHC_API ihc_status ihc_image_create(uint32_t width, uint32_t height, const uint8_t* rgb,
                                    ihc_image** out);
IHC_API void ihc_image_free(ihc_image* image);
IHC_API uint32_t ihc_image_width(const ihc_image* image);
IHC_API uint32_t ihc_image_height(const ihc_image* image);
IHC_API const uint8_t* ihc_image_pixels(const ihc_image* image);

/* Standard hexcone conversion; hue in degrees [0,360), s and v on [0,255]. */
IHC_API void ihc_rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v);

/* Mean/std emptiness filter. Returns 1 (empty), 0 (kept), or -1 on error. */
IHC_API int ihc_image_is_empty_tile(const ihc_image* image, double mean_low, double mean_high,
                                    double std_min);

/* Per-channel mean over the clipped square around (cx, cy). */
IHC_API ihc_status ihc_patch_mean(const ihc_image* image, double cx, double cy, int half_side,
                                  double rgb_out[3]);

/* Micron-calibrated tile grid. Tile i has origin (origin of the source
 * window); images are resized to output_size squared. */
typedef struct ihc_tileset ihc_tileset;
IHC_API ihc_status ihc_cut_tiles(const ihc_image* raster, double microns_per_pixel,
                                 double tile_fov_um, uint32_t output_size, ihc_tileset** out);
IHC_API size_t ihc_tileset_count(const ihc_tileset* tiles);
IHC_API const ihc_image* ihc_tileset_image(const ihc_tileset* tiles, size_t index);
IHC_API void ihc_tileset_origin(const ihc_tileset* tiles, size_t index, int64_t* x, int64_t* y);
IHC_API void ihc_tileset_free(ihc_tileset* tiles);

/* ---- heatmaps ----------------------------------------------------------- */

IHC_API ihc_status ihc_heatmap_load(const char* path, ihc_heatmap** out);
IHC_API ihc_status ihc_heatmap_save(const ihc_heatmap* heatmap, const char* path);
IHC_API ihc_status ihc_heatmap_create(uint32_t width, uint32_t height, uint32_t classes,
                                      const float* values_class_minor, ihc_heatmap** out);
IHC_API void ihc_heatmap_free(ihc_heatmap* heatmap);
IHC_API uint32_t ihc_heatmap_width(const ihc_heatmap* heatmap);
IHC_API uint32_t ihc_heatmap_height(const ihc_heatmap* heatmap);
IHC_API uint32_t ihc_heatmap_classes(const ihc_heatmap* heatmap);
IHC_API float ihc_heatmap_at(const ihc_heatmap* heatmap, uint32_t x, uint32_t y, uint32_t cls);

/* Mean Huber loss between aligned heatmaps. */
IHC_API ihc_status ihc_huber_loss(const ihc_heatmap* predicted, const ihc_heatmap* target,
                                  double delta, double* out);

/* ---- keypoint tables ----------------------------------------------------*/

typedef struct ihc_keypoint {
    double x;
    double y;
    int compartment; /* IHC_CLASS_* */
    double confidence;
    int stain; /* IHC_STAIN_* or -1 when absent */
} ihc_keypoint;

IHC_API ihc_status ihc_keypoints_create(ihc_keypoints** out);
IHC_API ihc_status ihc_keypoints_load(const char* path, ihc_keypoints** out);
IHC_API ihc_status ihc_keypoints_save(const ihc_keypoints* table, const char* path);
IHC_API void ihc_keypoints_free(ihc_keypoints* table);
IHC_API size_t ihc_keypoints_count(const ihc_keypoints* table);
IHC_API ihc_status ihc_keypoints_get(const ihc_keypoints* table, size_t index, ihc_keypoint* out,
                                     const char** slide_id, const char** tile_id);
IHC_API ihc_status ihc_keypoints_append(ihc_keypoints* table, const char* slide_id,
                                        const char* tile_id, const ihc_keypoint* kp);

/* Local-maximum extraction from one heatmap; rows adopt the given ids. */
IHC_API ihc_status ihc_extract_keypoints(const ihc_heatmap* heatmap, double confidence_threshold,
                                         double min_distance, int pool_size,
                                         const char* slide_id, const char* tile_id,
                                         ihc_keypoints** out);

/* Gaussian rendering of one tile's keypoints (rows must share the tile). */
IHC_API ihc_status ihc_render_heatmap(const ihc_keypoints* table, uint32_t width, uint32_t height,
                                      uint32_t classes, double sigma, ihc_heatmap** out);

/* Weighted point fusion across models. Tables are aligned per (slide, tile)
 * group; `weights` has one entry per table. */
IHC_API ihc_status ihc_fuse_keypoints(const ihc_keypoints* const* tables, const double* weights,
                                      size_t num_tables, double fuse_radius, ihc_keypoints** out);

/* ---- staining / H-score -------------------------------------------------*/

IHC_API ihc_status ihc_profile_load(const char* path, ihc_profile** out);
IHC_API ihc_status ihc_profile_save(const ihc_profile* profile, const char* path);
IHC_API ihc_status ihc_profile_create(const char* annotator_id, double hue_split_deg,
                                      double value_left, double value_right,
                                      int nucleus_half_side_px, ihc_profile** out);
IHC_API void ihc_profile_free(ihc_profile* profile);
IHC_API ihc_status ihc_profile_to_string(const ihc_profile* profile, char** out);
IHC_API double ihc_profile_value_left(const ihc_profile* profile);
IHC_API double ihc_profile_value_right(const ihc_profile* profile);
IHC_API double ihc_profile_hue_split(const ihc_profile* profile);
IHC_API double ihc_profile_objective(const ihc_profile* profile);
/* Orients the blue/brown side test; not part of the persisted format. */
IHC_API void ihc_profile_set_brown_hue_ref(ihc_profile* profile, double degrees);

/* Blue/brown + intensity classification of one nucleus. */
IHC_API ihc_status ihc_classify_nucleus(const ihc_image* image, const ihc_keypoint* kp,
                                        const ihc_profile* profile, int* stain_out);

/* Pools per-(compartment, stain) counts for one tile's keypoints into
 * counts[8], laid out compartment-major. Rows with mismatching tile ids are
 * the caller's concern; every row is classified. */
IHC_API ihc_status ihc_classify_counts(const ihc_image* image, const ihc_keypoints* table,
                                       const ihc_profile* profile, int64_t counts[8]);

/* H-score of one compartment from its 4 counts: 100*(f_w + 2 f_m + 3 f_s).
 * Returns IHC_ERROR_INVALID_ARGUMENT on an empty compartment. */
IHC_API ihc_status ihc_hscore(const int64_t counts[4], double* out);

/* JSON H-score report (one object per compartment) from pooled counts.
 * slide_ids/tile_count describe provenance; config_echo_json (may be NULL)
 * is embedded verbatim under "config". */
IHC_API ihc_status ihc_report_from_counts(const int64_t counts[8], const ihc_profile* profile,
                                          const char* const* slide_ids, size_t num_slides,
                                          size_t tile_count, const char* config_echo_json,
                                          char** json_out);

/* Hue histogram split between blue and brown populations. */
IHC_API ihc_status ihc_estimate_hue_split(const double* blue_hues, size_t num_blue,
                                          const double* brown_hues, size_t num_brown,
                                          double* out);

/* ---- calibration ---------------------------------------------------------*/

typedef struct ihc_calib_item {
    const ihc_image* image;
    const char* slide_id;
    const ihc_keypoints* annotated; /* rows carry stain labels */
    const ihc_keypoints* predicted;
} ihc_calib_item;

IHC_API ihc_status ihc_calibrate(const ihc_calib_item* items, size_t num_items,
                                 const char* annotator_id, int grid_lo, int grid_hi,
                                 int grid_step, double hue_split_deg, int nucleus_half_side_px,
                                 double brown_hue_ref_deg, ihc_profile** out);

/* Leave-one-slide-out: one profile per slide, trained on the others.
 * held_out_ids receives a NULL-terminated array owned by the result. */
typedef struct ihc_loso_result ihc_loso_result;
IHC_API ihc_status ihc_calibrate_loso(const ihc_calib_item* items, size_t num_items,
                                      const char* annotator_id, int grid_lo, int grid_hi,
                                      int grid_step, double hue_split_deg,
                                      int nucleus_half_side_px, double brown_hue_ref_deg,
                                      ihc_loso_result** out);
IHC_API size_t ihc_loso_count(const ihc_loso_result* result);
IHC_API const char* ihc_loso_slide_id(const ihc_loso_result* result, size_t index);
IHC_API const ihc_profile* ihc_loso_profile(const ihc_loso_result* result, size_t index);
IHC_API void ihc_loso_free(ihc_loso_result* result);

/* ---- evaluation -----------------------------------------------------------*/

typedef struct ihc_eval_config {
    double match_radius;
    size_t batch_size;
    size_t bootstrap_resamples;
    size_t bootstrap_outer_repeats;
    double bootstrap_confidence;
    uint64_t seed;
} ihc_eval_config;

/* Evaluation report as JSON; with pred2 != NULL also the paired bootstrap
 * CI block and its plain-text table under "ci_table". */
IHC_API ihc_status ihc_evaluate(const ihc_keypoints* pred, const ihc_keypoints* pred2,
                                const ihc_keypoints* ground_truth, const ihc_eval_config* cfg,
                                const char* config_echo_json, char** json_out);

/* Percentile bootstrap CI of the mean of diffs[0..n). */
IHC_API ihc_status ihc_bootstrap_ci(const double* diffs, size_t n, size_t resamples,
                                    double confidence, size_t outer_repeats, uint64_t seed,
                                    double* lower, double* upper, double* mean);

/* ---- synthetic oracle ------------------------------------------------------*/

typedef struct ihc_synth_spec {
    uint32_t tile_size;
    size_t nuclei;
    double stroma_fraction;
    double class_mix[4]; /* none, weak, moderate, strong */
    int nucleus_radius_px;
    double min_separation;
    uint64_t seed;
} ihc_synth_spec;

/* Fills defaults (256 px, 30 nuclei, even mixes, reference palette). */
IHC_API void ihc_synth_spec_init(ihc_synth_spec* spec);

IHC_API ihc_status ihc_synth_generate(const ihc_synth_spec* spec, const char* slide_id,
                                      const char* tile_id, ihc_synth** out);
IHC_API const ihc_image* ihc_synth_image(const ihc_synth* synth);
IHC_API const ihc_keypoints* ihc_synth_keypoints(const ihc_synth* synth);
/* counts[8] compartment-major; hscore[2] per compartment, NaN when empty. */
IHC_API void ihc_synth_expected(const ihc_synth* synth, int64_t counts[8], double hscore[2]);
IHC_API void ihc_synth_free(ihc_synth* synth);

/* The profile the default synthetic palette is exact under. */
IHC_API ihc_status ihc_reference_profile(ihc_profile** out);

/* ---- dataset split ----------------------------------------------------------*/

/* Deterministic shuffled 3-way partition. labels[i] receives 0 (train),
 * 1 (val) or 2 (test); remainders go to train. */
IHC_API ihc_status ihc_split_assign(size_t n, unsigned ratio_train, unsigned ratio_val,
                                    unsigned ratio_test, uint64_t seed, uint8_t* labels);

#ifdef __cplusplus
}
#endif

#endif /* IHCSCORE_H */
