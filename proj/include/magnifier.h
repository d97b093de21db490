/*
 * magnifier.h - C interface to the magnifier network-access detection engine.
 *
 * The engine fingerprints device classes by the forest of domain names their
 * network-access bursts touch, distills those fingerprints, and matches
 * per-source traffic windows against them in real time. All functions return
 * MGF_OK on success; on failure mgf_last_error() describes the problem for
 * the calling thread. Strings returned through char** outputs are heap
 * allocated and must be released with mgf_string_free().
 */

#ifndef MAGNIFIER_H
#define MAGNIFIER_H

#include <stddef.h>

#if defined(_WIN32)
#define MGF_API __declspec(dllexport)
#else
#define MGF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mgf_status {
    MGF_OK = 0,
    MGF_ERR_INVALID_ARGUMENT = 1,
    MGF_ERR_IO = 2,
    MGF_ERR_DATA = 3,
    MGF_ERR_STATE = 4,
    MGF_ERR_INTERNAL = 5
} mgf_status;

typedef enum mgf_protocol {
    MGF_PROTO_DNS = 0,
    MGF_PROTO_TLS = 1,
    MGF_PROTO_HTTP = 2
} mgf_protocol;

/* Detection parameters. Call mgf_config_init for the defaults: tau 15s,
 * epsilon 0.4, gamma 0.5, collector on, calibrated scores on. */
typedef struct mgf_config {
    double tau;
    double epsilon;
    double gamma;
    int collector;
    int trigger_any;
    int expand_test_side;
    int calibrated;
    int use_raw_counts; /* score with raw counts instead of distilled values */
    double reorder_slack;
} mgf_config;

MGF_API void mgf_config_init(mgf_config* config);

MGF_API const char* mgf_version(void);
MGF_API const char* mgf_last_error(void);
MGF_API void mgf_string_free(char* s);

/* --- extraction ---------------------------------------------------------- */

/* Reads a classic pcap file and writes the extracted (ts, src, proto, domain)
 * events as one JSON object per line. stats_json_out (optional) receives the
 * per-protocol extraction counters. */
MGF_API mgf_status mgf_extract_pcap(const char* pcap_path, const char* events_out_path,
                                    char** stats_json_out);

/* --- fingerprint building ------------------------------------------------ */

typedef struct mgf_builder mgf_builder;

/* suffix_file_path may be NULL: only the default rule (rightmost label is
 * the suffix) applies. level_cap <= 0 selects the default of 6. */
MGF_API mgf_builder* mgf_builder_new(const char* suffix_file_path, int level_cap);
MGF_API mgf_status mgf_builder_add_event_log(mgf_builder* builder, const char* events_path,
                                             const char* label);
/* Folds an existing (undistilled) fingerprint file into the builder so
 * repeated build runs can extend one file. */
MGF_API mgf_status mgf_builder_merge_file(mgf_builder* builder, const char* fp_path);
MGF_API mgf_status mgf_builder_save(mgf_builder* builder, const char* out_path);
MGF_API void mgf_builder_free(mgf_builder* builder);

/* Two-stage distillation of a raw fingerprint file: intra-class tree
 * weighting followed by inter-class TF-IDF. sigma <= 0 selects 1.0. */
MGF_API mgf_status mgf_distill(const char* fp_in_path, const char* fp_out_path, double sigma);

/* --- detection ----------------------------------------------------------- */

typedef struct mgf_engine mgf_engine;

MGF_API mgf_engine* mgf_engine_open(const char* fp_path, const char* suffix_file_path);
MGF_API char* mgf_engine_summary_json(const mgf_engine* engine);
MGF_API void mgf_engine_close(mgf_engine* engine);

typedef struct mgf_detector mgf_detector;

MGF_API mgf_detector* mgf_detector_new(mgf_engine* engine, const mgf_config* config);
MGF_API mgf_status mgf_detector_push(mgf_detector* detector, double ts, const char* src,
                                     mgf_protocol proto, const char* domain);
/* Next finished detection as a JSON line, or NULL when none is pending. */
MGF_API char* mgf_detector_next_json(mgf_detector* detector);
/* Closes all open windows; pending detections remain pollable. */
MGF_API mgf_status mgf_detector_finish(mgf_detector* detector);
MGF_API void mgf_detector_free(mgf_detector* detector);

/* Runs a whole event log through a detector and writes one JSON detection
 * record per window, preceded by a config header record. */
MGF_API mgf_status mgf_detect_file(mgf_engine* engine, const mgf_config* config,
                                   const char* events_path, const char* detections_out_path);

/* --- evaluation ---------------------------------------------------------- */

/* Scores a detection log against a truth file (one {"src", "labels"} record
 * per line; the label "__background__" marks no-access samples). sweep is
 * NULL or "lo:hi:step" to re-threshold the logged scores. The report JSON
 * carries dr, far, per-class breakdown, and sweep points. */
MGF_API mgf_status mgf_eval_file(const char* detections_path, const char* truth_path,
                                 const char* sweep, char** report_json_out);

/* Generates a synthetic labelled corpus (training logs per class, scenario
 * event streams, truth files) under out_dir from a JSON spec file; pass NULL
 * for the built-in defaults. */
MGF_API mgf_status mgf_synth(const char* spec_json_path, const char* out_dir,
                             char** manifest_json_out);

#ifdef __cplusplus
}
#endif

#endif /* MAGNIFIER_H */
