#include <stdio.h>
#include <stdlib.h>

struct score {
    const char *name;
    int points;
    int games;
};

static struct score table[] = {
    {"ada", 42, 6},
    {"brian", 30, 5},
    {"grace", 18, 0},
    {"linus", 27, 3},
};

static int per_game(const struct score *s) {
    return s->points / s->games;
}

static int by_average(const void *lhs, const void *rhs) {
    const struct score *a = lhs;
    const struct score *b = rhs;
    int buf[4] = {per_game(a), per_game(b), a->games, b->games};
    return buf[1] - buf[0];
}

int main(void) {
    size_t count = sizeof table / sizeof table[0];
    qsort(table, count, sizeof table[0], by_average);
    for (size_t i = 0; i < count; i++)
        printf("%s %d\n", table[i].name, per_game(&table[i]));
    return 0;
}
