/* Exercises the C interface: mesh creation, a short damped-switching run,
 * and error reporting. */
#include <stdio.h>
#include <string.h>
#include "llg.h"

int main(void) {
    double lo[3] = {0.0, 0.0, 0.0};
    double hi[3] = {1.0, 1.0, 1.0};
    LlgMesh *mesh = NULL;
    if (llg_mesh_box(2, 2, 2, lo, hi, &mesh) != LLG_STATUS_OK) {
        fprintf(stderr, "mesh_box failed\n");
        return 1;
    }
    size_t n = llg_mesh_vertex_count(mesh);
    printf("vertices=%zu tets=%zu faces=%zu\n", n, llg_mesh_tet_count(mesh),
           llg_mesh_boundary_face_count(mesh));

    double *m0 = calloc(3 * n, sizeof(double));
    for (size_t i = 0; i < n; i++) m0[3 * i] = 1.0;

    LlgSimParams params;
    memset(&params, 0, sizeof params);
    params.k = 1e-3;
    params.alpha = 1.0;
    params.c_ex = 1.0;
    params.epsilon = 1e-10;
    params.strategy = LLG_STRATEGY_ADAMS_BASHFORTH;
    params.quad_points = 7;
    params.cg_rel_tol = 1e-10;
    params.applied_field[0] = -2.0;
    params.applied_field[1] = -0.5;

    LlgSim *sim = NULL;
    if (llg_sim_new(mesh, &params, m0, &sim) != LLG_STATUS_OK) {
        char buf[256];
        llg_last_error_message(buf, sizeof buf);
        fprintf(stderr, "sim_new failed: %s\n", buf);
        return 1;
    }
    LlgStepReport report;
    if (llg_sim_run(sim, 20, &report) != LLG_STATUS_OK) {
        fprintf(stderr, "run failed\n");
        return 1;
    }
    printf("t=%.6f sweeps=%zu norm_dev=%.3e avg=(%.6f,%.6f,%.6f)\n", report.t,
           report.sweeps, report.norm_dev_max, report.avg_m[0], report.avg_m[1],
           report.avg_m[2]);

    /* deliberate error: invalid bounds */
    LlgMesh *bad = NULL;
    double hi_bad[3] = {-1.0, 1.0, 1.0};
    if (llg_mesh_box(1, 1, 1, lo, hi_bad, &bad) != LLG_STATUS_INVALID_ARGUMENT) {
        fprintf(stderr, "expected invalid-argument status\n");
        return 1;
    }
    char buf[256];
    size_t len = llg_last_error_message(buf, sizeof buf);
    printf("error_len=%zu\n", len);

    llg_sim_free(sim);
    llg_mesh_free(mesh);
    free(m0);
    printf("ok\n");
    return 0;
}
