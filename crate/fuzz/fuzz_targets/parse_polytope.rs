#![no_main]

use libfuzzer_sys::fuzz_target;
use polytube::io::parse_polytope_file;
use polytube::Tolerance;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(file) = parse_polytope_file(text) else {
        return;
    };
    // Vertex enumeration is exhaustive over facet subsets; keep it small.
    if file.dim > 4 || file.halfspaces.len() > 12 {
        return;
    }
    if let Ok(p) = file.build(&Tolerance::default()) {
        assert!(p.vertices.len() >= p.dim + 1);
        for v in &p.vertices {
            assert!(p.max_excess(v) <= 1e-6 * p.scale());
        }
        let again = polytube::io::parse_polytope(
            &polytube::io::polytope_to_json(&p),
            &Tolerance::default(),
        );
        assert!(again.is_ok());
    }
});
