//! Expected answers for the bundled navigation project.

/// (query location, symbol, file, line) with the targets read off the
/// fixture sources by hand.
pub const KNOWN: &[(&str, &str, &str, u32)] = &[
    ("main.c:9", "perimeter", "geometry.c", 20),
    ("main.c:10", "area", "geometry.c", 31),
    ("main.c:13", "global_scale", "geometry.c", 5),
    ("main.c:19", "make_point", "geometry.c", 7),
    ("main.c:7", "polygon", "geometry.h", 11),
    ("main.c:36", "Point", "geometry.h", 9),
    ("main.c:48", "MAX_POINTS", "geometry.h", 4),
    ("main.c:41", "build_square", "main.c", 16),
    ("main.c:45", "summarize", "main.c", 7),
];
