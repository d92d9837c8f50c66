/* Rank two profile directories against a target:
 *   cc similarity.c -Iinclude -L../../target/release -lfgvc_ffi -lm -lpthread -ldl
 *   ./a.out TARGET_DIR SOURCE_DIR... */
#include <stdio.h>

#include "fgvc.h"

int main(int argc, char **argv) {
    if (argc < 3) {
        fprintf(stderr, "usage: %s TARGET SOURCE...\n", argv[0]);
        return 2;
    }
    FgvcProfile *target = NULL;
    if (fgvc_profile_load(argv[1], &target) != FGVC_STATUS_OK) {
        fprintf(stderr, "%s\n", fgvc_last_error());
        return 2;
    }
    printf("source,emd,sim\n");
    for (int i = 2; i < argc; i++) {
        FgvcProfile *source = NULL;
        double cost, sim;
        if (fgvc_profile_load(argv[i], &source) != FGVC_STATUS_OK ||
            fgvc_profile_emd(source, target, &cost) != FGVC_STATUS_OK ||
            fgvc_similarity(cost, fgvc_default_gamma(), &sim) != FGVC_STATUS_OK) {
            fprintf(stderr, "%s: %s\n", argv[i], fgvc_last_error());
            fgvc_profile_free(source);
            fgvc_profile_free(target);
            return 2;
        }
        printf("%s,%g,%g\n", argv[i], cost, sim);
        fgvc_profile_free(source);
    }
    fgvc_profile_free(target);
    return 0;
}
