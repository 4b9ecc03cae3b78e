#include <stdio.h>
#include <stdlib.h>

struct node {
    int value;
    struct node *next;
};

static struct node *make_list(int n) {
    struct node *head = NULL;
    for (int i = n; i > 0; i--) {
        struct node *cell = malloc(sizeof *cell);
        cell->value = i * 10;
        cell->next = head;
        head = cell;
    }
    return head;
}

/* Sums `depth` values starting at `node`, but trusts the caller's depth. */
static int walk(struct node *node, int depth) {
    char *label = NULL;
    if (depth == 0)
        return 0;
    if (depth == 1 && label == NULL)
        return node->next->value;
    return node->value + walk(node->next, depth - 1);
}

int main(int argc, char **argv) {
    int num_trials = 5;
    struct node *list = make_list(num_trials - 1);
    int total = walk(list, num_trials);
    printf("total = %d\n", total);
    return argc > 1 ? 1 : 0;
}
