#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "phasediv.h"

int main(void) {
    const char *config = "problem.n = 8\nproblem.r_outer = 0.45\nproblem.zernike_index = 4\nplan.defocus = [-1.0, 1.0]\n";
    PdInstance *inst = NULL;
    if (pd_instance_generate(config, &inst) != PD_STATUS_OK) return 1;
    size_t n = pd_instance_grid_size(inst);
    size_t len = 2 * n * n;
    double *z0 = malloc(len * sizeof(double));
    pd_instance_random_start(inst, 7, z0, len);

    PdObjective *obj = NULL;
    if (pd_objective_new(inst, PD_MODEL_LS, 1e-14, &obj) != PD_STATUS_OK) return 2;
    PdSolverOptions opts = pd_solver_options_default();
    PdSolution *sol = NULL;
    if (pd_solve(obj, &opts, z0, len, &sol) != PD_STATUS_OK) return 3;
    double f, rms;
    PdStopReason stop;
    pd_solution_summary(sol, &f, &rms, &stop);
    printf("iterations %zu rms %g\n", pd_solution_iterations(sol), rms);

    /* error path: bad config reports a message */
    PdInstance *bad = NULL;
    if (pd_instance_generate("problem.n = 1", &bad) != PD_STATUS_CONFIG) return 4;
    char msg[256];
    if (pd_last_error(msg, sizeof msg) <= 1) return 5;

    pd_solution_free(sol);
    pd_objective_free(obj);
    pd_instance_free(inst);
    free(z0);
    return isfinite(rms) ? 0 : 6;
}
