#include <math.h>
#include <stdio.h>
#include "seki.h"

#define CHECK(call)                                                              \
    do {                                                                         \
        SekiStatus s_ = (call);                                                  \
        if (s_ != SEKI_STATUS_OK) {                                              \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, seki_last_error()); \
            return 1;                                                            \
        }                                                                        \
    } while (0)

int main(void) {
    double a[4] = {1.0, 0.3, 0.2, 1.0};
    double y[2] = {2.0, 0.3};
    SekiModel *model = NULL;
    SekiRegularizer *reg = NULL;
    SekiTrace *trace = NULL;
    CHECK(seki_model_new(a, 2, 2, y, 1.0, &model));
    CHECK(seki_regularizer_l1(0.5, &reg));

    double x0[2] = {0.0, 0.0};
    CHECK(seki_run_subgd(x0, 2, model, reg, 0.5, 1.0, 20000, 100, &trace));
    double x[2];
    CHECK(seki_trace_final_iterate(trace, x, 2));
    if (fabs(x[0] - 1.5) > 1e-2 || fabs(x[1]) > 1e-2) {
        fprintf(stderr, "unexpected iterate %g %g\n", x[0], x[1]);
        return 1;
    }
    SekiRecord rec;
    CHECK(seki_trace_record(trace, seki_trace_len(trace) - 1, &rec));
    if (rec.forward_evals != rec.k + 1) return 1;

    if (seki_regularizer_l1(-1.0, &reg) != SEKI_STATUS_INVALID) return 1;
    if (seki_last_error() == NULL) return 1;

    seki_trace_free(trace);
    seki_regularizer_free(reg);
    seki_model_free(model);
    printf("ok %s\n", seki_version());
    return 0;
}
