#include <stdio.h>
#include <string.h>

#include "mapstory.h"

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke VOCAB_TOML\n");
        return 2;
    }
    MapstoryPipeline *p = NULL;
    if (mapstory_pipeline_open_mock(argv[1], &p) != MAPSTORY_STATUS_OK) {
        fprintf(stderr, "open: %s\n", mapstory_last_error_message());
        return 1;
    }
    const char *words[] = {"pictorial map", "world", "flight network"};
    char *prompt = NULL;
    if (mapstory_compose_prompt(words, 3, "why", &prompt) != MAPSTORY_STATUS_OK) {
        fprintf(stderr, "prompt: %s\n", mapstory_last_error_message());
        return 1;
    }
    printf("%s\n", prompt);
    mapstory_string_free(prompt);

    char *json = NULL;
    const uint8_t junk[] = {1, 2, 3};
    MapstoryStatus s = mapstory_story(p, junk, sizeof junk, NULL, &json);
    printf("status %d\n", (int)s);
    mapstory_pipeline_free(p);
    return s == MAPSTORY_STATUS_INVALID_IMAGE ? 0 : 1;
}
