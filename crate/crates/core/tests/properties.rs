// The acceptance harness uses the registry; this target runs each family as its own test.
#[allow(dead_code)]
mod props;

#[test]
fn activation_normalization() {
    props::activation_normalization().unwrap();
}

#[test]
fn hermite_parseval_stein() {
    props::hermite_parseval_stein().unwrap();
}

#[test]
fn quadrature_orthonormality() {
    props::quadrature_orthonormality().unwrap();
}

#[test]
fn measure_normalization() {
    props::measure_normalization().unwrap();
}

#[test]
fn data_measure_identities() {
    props::data_measure_identities().unwrap();
}

#[test]
fn kernel_psd() {
    props::kernel_psd().unwrap();
}

#[test]
fn phi_permutation() {
    props::phi_permutation().unwrap();
}

#[test]
fn esd_identities() {
    props::esd_identities().unwrap();
}

#[test]
fn law_solver_contract() {
    props::law_solver_contract().unwrap();
}

#[test]
fn lambda_min_shift() {
    props::lambda_min_shift().unwrap();
}

#[test]
fn ridge_identities() {
    props::ridge_identities().unwrap();
}

#[test]
fn bias_variance_bounds() {
    props::bias_variance_bounds().unwrap();
}

#[test]
fn hanson_wright_unbiased() {
    props::hanson_wright_unbiased().unwrap();
}

#[test]
fn hanson_wright_decay() {
    props::hanson_wright_decay().unwrap();
}
