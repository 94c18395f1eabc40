#ifndef DVQA_DVQA_H
#define DVQA_DVQA_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DVQA_API __declspec(dllexport)
#else
#define DVQA_API __attribute__((visibility("default")))
#endif

typedef enum dvqa_status {
  DVQA_OK = 0,
  DVQA_ERR_CONFIG = 1,   /* invalid configuration or shape mismatch */
  DVQA_ERR_DATA = 2,     /* malformed or inconsistent data */
  DVQA_ERR_USAGE = 3,    /* API misuse, e.g. a null handle */
  DVQA_ERR_NUMERIC = 4,  /* non-finite loss or gradient */
  DVQA_ERR_IO = 5,       /* file system failure */
  DVQA_ERR_INTERNAL = 6
} dvqa_status;

typedef struct dvqa_dataset dvqa_dataset;
typedef struct dvqa_model dvqa_model;

/* Message for the last failed call on this thread; empty after success. */
DVQA_API const char* dvqa_last_error(void);
DVQA_API const char* dvqa_status_name(dvqa_status status);
DVQA_API const char* dvqa_version(void);

/* Strings returned through char** out-parameters are owned by the caller. */
DVQA_API void dvqa_string_free(char* s);

/* Datasets. config_text uses the training config format; only data_seed,
   dataset and synthetic.* keys matter here. */
DVQA_API dvqa_status dvqa_dataset_generate(const char* config_text, dvqa_dataset** out);
DVQA_API dvqa_status dvqa_dataset_load(const char* path, dvqa_dataset** out);
DVQA_API dvqa_status dvqa_dataset_save(const dvqa_dataset* ds, const char* path);
/* test_questions/test_annotations may be NULL. features: binary feature file
   or a .json object of id -> array. */
DVQA_API dvqa_status dvqa_dataset_ingest(const char* questions, const char* annotations, const char* test_questions,
                                         const char* test_annotations, const char* features, dvqa_dataset** out);
DVQA_API dvqa_status dvqa_dataset_write_features(const dvqa_dataset* ds, const char* path);
DVQA_API size_t dvqa_dataset_size(const dvqa_dataset* ds, const char* split);
DVQA_API void dvqa_dataset_free(dvqa_dataset* ds);

/* Counterpart index statistics of the train split as JSON. */
DVQA_API dvqa_status dvqa_index_stats(const dvqa_dataset* ds, char** json_out);

/* Trains per config_text and writes run.json, loss.csv, model.ckpt and
   config.txt into out_dir. run_json_out may be NULL. */
DVQA_API dvqa_status dvqa_train(const char* config_text, const char* out_dir, char** run_json_out);

DVQA_API dvqa_status dvqa_model_load(const char* checkpoint_path, dvqa_model** out);
DVQA_API void dvqa_model_free(dvqa_model* model);
/* Rebuilds the dataset recorded in the checkpoint's training config. */
DVQA_API dvqa_status dvqa_model_dataset(const dvqa_model* model, dvqa_dataset** out);

/* Accuracy on split ("train" or "test") as JSON: overall and per category. */
DVQA_API dvqa_status dvqa_evaluate(const dvqa_model* model, const dvqa_dataset* ds, const char* split,
                                   char** json_out);

/* Diagnostics over n run directories labelled by labels[i]; writes the
   distribution, divergence, class-distance and answer-space files into
   out_dir. svg != 0 also renders distribution bars. */
DVQA_API dvqa_status dvqa_analyze(const char* const* run_dirs, const char* const* labels, size_t n,
                                  const char* out_dir, int svg, char** summary_json_out);

#ifdef __cplusplus
}
#endif

#endif
