/* Minimal C client: two identical textured frames, no masks. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include "driftwatch.h"

int main(void) {
    enum { W = 96, H = 80 };
    static uint8_t frame[W * H];
    unsigned s = 12345u;
    for (int i = 0; i < W * H; i++) {
        s = s * 1103515245u + 12345u;
        frame[i] = (uint8_t)(40 + (s >> 16) % 160);
    }
    DwAnalyzer *a = NULL;
    if (dw_analyzer_new("{\"fps\": 10.0}", &a) != DW_STATUS_OK) {
        fprintf(stderr, "new: %s\n", dw_last_error());
        return 1;
    }
    for (uint64_t t = 0; t < 2; t++) {
        DwStatus st = dw_analyzer_push_frame(a, t, frame, W, H, NULL);
        if (st != DW_STATUS_OK) {
            fprintf(stderr, "push: %d %s\n", (int)st, dw_last_error());
            return 1;
        }
    }
    DwGmc g;
    if (dw_analyzer_gmc(a, &g) != DW_STATUS_OK || !g.available) return 1;
    if (dw_analyzer_push_frame(a, 1, frame, W, H, NULL) != DW_STATUS_CONTRACT) return 1;
    dw_analyzer_free(a);
    printf("driftwatch %s ok a00=%.3f\n", dw_version(), g.transform[0]);
    return 0;
}
