// Records `git describe` of the source tree for report version strings.
fn main() {
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    let out = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output();
    if let Ok(o) = out {
        if o.status.success() {
            let s = String::from_utf8_lossy(&o.stdout).trim().to_string();
            println!("cargo:rustc-env=S2D_GIT_DESCRIBE={s}");
        }
    }
}
