fn main() {
    println!("cargo::rustc-check-cfg=cfg(recon_simd_exp)");
    let target_os = std::env::var("CARGO_CFG_TARGET_OS").unwrap_or_default();
    let target_arch = std::env::var("CARGO_CFG_TARGET_ARCH").unwrap_or_default();
    let target_env = std::env::var("CARGO_CFG_TARGET_ENV").unwrap_or_default();
    // The vectorized exp shim relies on glibc's libmvec.
    if target_os == "linux" && target_arch == "x86_64" && target_env == "gnu" {
        println!("cargo:rerun-if-changed=csrc/vexp.c");
        cc::Build::new().file("csrc/vexp.c").opt_level(2).compile("recon_vexp");
        println!("cargo:rustc-link-lib=mvec");
        println!("cargo:rustc-link-lib=m");
        println!("cargo::rustc-cfg=recon_simd_exp");
    }
}
