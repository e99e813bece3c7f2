#include <stdio.h>
#include <string.h>
#include "mmea.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        MmeaStatus st_ = (call);                                           \
        if (st_ != MMEA_STATUS_OK) {                                       \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_,             \
                    mmea_last_error() ? mmea_last_error() : "");           \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(int argc, char **argv) {
    if (argc < 2) {
        return 2;
    }
    const char *dir = argv[1];
    CHECK(mmea_synth_generate(dir, 60, 0.0, 0.0, 0.2, 3));

    MmeaConfig *cfg = mmea_config_new();
    CHECK(mmea_config_set_int(cfg, "embed_dim", 32));
    CHECK(mmea_config_set_modalities(cfg, "rel,vis,attr,time"));
    if (mmea_config_set_int(cfg, "bogus", 1) != MMEA_STATUS_INVALID_ARGUMENT) {
        return 1;
    }

    MmeaDataset *ds = NULL;
    CHECK(mmea_dataset_load(dir, cfg, &ds));
    size_t ns = 0, nt = 0;
    CHECK(mmea_dataset_entities(ds, &ns, &nt));
    if (ns != 60 || nt != 60) {
        return 1;
    }

    MmeaRun *run = NULL;
    CHECK(mmea_align(ds, cfg, false, &run));
    size_t cutoffs[1] = {1};
    double hits[1], mrr, mr;
    CHECK(mmea_run_metrics(run, cutoffs, hits, 1, &mrr, &mr));
    char *json = NULL;
    CHECK(mmea_run_metrics_json(run, &json));
    printf("%s\n", json);
    mmea_string_free(json);

    double m[4] = {1.0, 0.0, 0.0, 1.0};
    double s[4];
    CHECK(mmea_sinkhorn(m, 2, 2, 10, s));
    if (!(s[0] > s[1] && s[3] > s[2])) {
        return 1;
    }

    mmea_run_free(run);
    mmea_dataset_free(ds);
    mmea_config_free(cfg);
    return hits[0] == 1.0 ? 0 : 1;
}
