use std::path::Path;
use std::process::Command;

const PROGRAM: &str = r#"
#include "rarecall.h"
#include <stdio.h>

int use_api(const char *path, const float *samples, size_t n) {
    RcProfile *p = NULL;
    if (rc_profile_load(path, &p) != RC_STATUS_OK) {
        fprintf(stderr, "%s\n", rc_last_error_message());
        return 1;
    }
    double t = 0.0;
    size_t dim = 0;
    rc_profile_threshold(p, &t);
    rc_profile_dimension(p, &dim);
    RcDetections *d = NULL;
    if (rc_detect_samples(p, samples, n, 22050, &d) == RC_STATUS_OK) {
        for (size_t i = 0; i < rc_detections_len(d); i++) {
            RcDetection row;
            rc_detections_get(d, i, &row);
            printf("%f %f %f %d\n", row.start_s, row.end_s, row.score, row.positive);
        }
        rc_detections_free(d);
    }
    double score;
    int32_t positive;
    double v[1] = {0.0};
    rc_profile_classify_embedding(p, v, 1, &score, &positive);
    double s[2] = {0.1, 0.2}, db[2] = {1.0, 2.0}, du[2] = {0.3, 0.4}, overall[2];
    size_t order[2];
    rc_rank_metrics(2, s, db, du, overall, order);
    rc_profile_free(p);
    return (int)rc_version()[0];
}
"#;

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("rarecall.h").exists());
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("ffi-header");
    std::fs::create_dir_all(&dir).unwrap();
    let c = dir.join("use.c");
    std::fs::write(&c, PROGRAM).unwrap();
    let cpp = dir.join("use.cpp");
    std::fs::write(&cpp, PROGRAM).unwrap();
    for (compiler, src, std) in [("cc", &c, "-std=c99"), ("c++", &cpp, "-std=c++11")] {
        let out = match Command::new(compiler)
            .args([std, "-Wall", "-Werror", "-fsyntax-only", "-I"])
            .arg(&include)
            .arg(src)
            .output()
        {
            Ok(o) => o,
            Err(e) => {
                eprintln!("{compiler} unavailable ({e}); header check skipped");
                continue;
            }
        };
        assert!(
            out.status.success(),
            "{compiler}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
