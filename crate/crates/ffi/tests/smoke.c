#include <stdio.h>
#include <stdlib.h>
#include "cosmix.h"

#define CHECK(call)                                                  \
    do {                                                             \
        CosmixStatus s_ = (call);                                    \
        if (s_ != COSMIX_STATUS_OK) {                                \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,        \
                    cosmix_last_error());                            \
            return 1;                                                \
        }                                                            \
    } while (0)

int main(void) {
    double x[3] = {1.0, 0.0, 0.0}, y[3] = {0.0, 1.0, 0.0}, d = -1.0;
    CHECK(cosmix_cosine_distance(x, y, 3, &d));
    if (d != 1.0) return 2;

    double v[8 * 4] = {0};
    for (int j = 0; j < 8; j++) {
        int b = j / 4;
        v[j * 4 + 2 * b] = 2.0 + (j % 2);
        v[j * 4 + 2 * b + 1] = 1.0;
    }
    CosmixMatrix *m = NULL;
    CHECK(cosmix_matrix_from_dense(v, 8, 4, COSMIX_WEIGHTING_IDF_WEIGHTED, &m));
    CosmixFitOptions opts = cosmix_fit_options_default();
    CosmixModel *model = NULL;
    CosmixResult *res = NULL;
    CHECK(cosmix_fit_em(m, 2, &opts, &model, &res));
    size_t labels[8];
    CHECK(cosmix_result_labels(res, labels, 8, NULL));
    if (labels[0] == labels[4] || labels[0] != labels[3] || labels[4] != labels[7]) return 3;

    if (cosmix_fit_em(m, 1, &opts, &model, &res) != COSMIX_STATUS_INVALID_ARGUMENT) return 4;
    if (cosmix_last_error() == NULL) return 5;

    printf("ok k=%zu lambda=%g\n", cosmix_model_k(model), cosmix_model_lambda(model));
    cosmix_result_free(res);
    cosmix_model_free(model);
    cosmix_matrix_free(m);
    return 0;
}
