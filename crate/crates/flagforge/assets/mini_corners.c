/* Integer corner-response kernel over a synthetic image.
 * Deterministic: output depends only on FLAGFORGE_N (default 24).
 * Heavy use of small helper functions keeps unoptimized builds large
 * and slow, which is what a compiler-flag benchmark needs. */
#include <stdio.h>
#include <stdlib.h>

#define W 200
#define H 200

static unsigned char img[H][W];
static long resp[H][W];

static unsigned int lcg_state = 12345u;

static unsigned int lcg_next(void) {
    lcg_state = lcg_state * 1664525u + 1013904223u;
    return lcg_state >> 16;
}

static int clampi(int v, int lo, int hi) {
    if (v < lo) return lo;
    if (v > hi) return hi;
    return v;
}

static int pixel(int y, int x) {
    return (int)img[clampi(y, 0, H - 1)][clampi(x, 0, W - 1)];
}

static int grad_x(int y, int x) {
    int a = pixel(y - 1, x + 1) + 2 * pixel(y, x + 1) + pixel(y + 1, x + 1);
    int b = pixel(y - 1, x - 1) + 2 * pixel(y, x - 1) + pixel(y + 1, x - 1);
    return a - b;
}

static int grad_y(int y, int x) {
    int a = pixel(y + 1, x - 1) + 2 * pixel(y + 1, x) + pixel(y + 1, x + 1);
    int b = pixel(y - 1, x - 1) + 2 * pixel(y - 1, x) + pixel(y - 1, x + 1);
    return a - b;
}

static int grad_d1(int y, int x) {
    int a = pixel(y - 1, x) + 2 * pixel(y - 1, x + 1) + pixel(y, x + 1);
    int b = pixel(y, x - 1) + 2 * pixel(y + 1, x - 1) + pixel(y + 1, x);
    return a - b;
}

static int grad_d2(int y, int x) {
    int a = pixel(y - 1, x) + 2 * pixel(y - 1, x - 1) + pixel(y, x - 1);
    int b = pixel(y, x + 1) + 2 * pixel(y + 1, x + 1) + pixel(y + 1, x);
    return a - b;
}

static long isqrt(long v) {
    long r = 0, bit = 1l << 30;
    if (v < 0) return 0;
    while (bit > v) bit >>= 2;
    while (bit != 0) {
        if (v >= r + bit) {
            v -= r + bit;
            r = (r >> 1) + bit;
        } else {
            r >>= 1;
        }
        bit >>= 2;
    }
    return r;
}

static long edge_magnitude(int y, int x) {
    long gx = grad_x(y, x);
    long gy = grad_y(y, x);
    long d1 = grad_d1(y, x);
    long d2 = grad_d2(y, x);
    return isqrt(gx * gx + gy * gy + d1 * d1 + d2 * d2);
}

static long corner_response(int y, int x) {
    long gxx = 0, gyy = 0, gxy = 0;
    int dy, dx;
    for (dy = -2; dy <= 2; dy++) {
        for (dx = -2; dx <= 2; dx++) {
            long gx = grad_x(y + dy, x + dx);
            long gy = grad_y(y + dy, x + dx);
            gxx += gx * gx;
            gyy += gy * gy;
            gxy += gx * gy;
        }
    }
    /* det - trace^2/5, scaled to stay in integer range */
    long det = (gxx >> 6) * (gyy >> 6) - (gxy >> 6) * (gxy >> 6);
    long trace = (gxx + gyy) >> 6;
    return det - (trace * trace) / 5 + edge_magnitude(y, x);
}

static void fill_image(unsigned int salt) {
    int y, x;
    lcg_state = 12345u + salt;
    for (y = 0; y < H; y++)
        for (x = 0; x < W; x++)
            img[y][x] = (unsigned char)(lcg_next() & 0xff);
}

static unsigned long pass(void) {
    unsigned long checksum = 0;
    int y, x;
    for (y = 0; y < H; y++)
        for (x = 0; x < W; x++)
            resp[y][x] = corner_response(y, x);
    for (y = 1; y < H - 1; y++) {
        for (x = 1; x < W - 1; x++) {
            long r = resp[y][x];
            if (r > resp[y - 1][x] && r > resp[y + 1][x] && r > resp[y][x - 1]
                && r > resp[y][x + 1] && r > 1000) {
                checksum = checksum * 31ul + (unsigned long)(y * W + x);
            }
        }
    }
    return checksum;
}

int main(void) {
    const char *env = getenv("FLAGFORGE_N");
    int iterations = env ? atoi(env) : 6;
    unsigned long checksum = 0;
    int i;
    if (iterations < 1) iterations = 1;
    for (i = 0; i < iterations; i++) {
        fill_image((unsigned int)i);
        checksum = checksum * 1000003ul + pass();
    }
    printf("%lu\n", checksum);
    return 0;
}
