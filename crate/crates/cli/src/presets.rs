//! Built-in scenarios named after the figures they reproduce.

pub const NAMES: [&str; 6] = ["fig2", "fig3", "fig5-top", "fig5-bottom", "fig6", "fig7"];

pub fn get(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2" => include_str!("../presets/fig2.toml"),
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig5-top" => include_str!("../presets/fig5-top.toml"),
        "fig5-bottom" => include_str!("../presets/fig5-bottom.toml"),
        "fig6" => include_str!("../presets/fig6.toml"),
        "fig7" => include_str!("../presets/fig7.toml"),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ScenarioFile;

    #[test]
    fn every_preset_parses_and_expands() {
        for name in NAMES {
            let file = ScenarioFile::parse(get(name).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(file.name, name);
            let grid = file.grid(None).unwrap();
            assert!(!grid.is_empty());
            for t in &file.targets {
                assert!(grid.iter().any(|p| p.group == t.group), "{name}: target group {}", t.group);
            }
        }
    }

    #[test]
    fn fig3_covers_both_sizes() {
        let grid = ScenarioFile::parse(get("fig3").unwrap()).unwrap().grid(None).unwrap();
        let sizes: std::collections::BTreeSet<_> = grid.iter().map(|p| (p.config.params.n, p.config.params.view_len)).collect();
        assert_eq!(sizes.into_iter().collect::<Vec<_>>(), vec![(1000, 20), (10000, 50)]);
    }

    #[test]
    fn fig5_bottom_sweeps_swap_length() {
        let grid = ScenarioFile::parse(get("fig5-bottom").unwrap()).unwrap().grid(None).unwrap();
        let mut s: Vec<_> = grid.iter().map(|p| p.config.params.swap_len).collect();
        s.dedup();
        assert_eq!(s, vec![2, 3, 5, 8, 10]);
        assert!(grid.iter().all(|p| p.config.attack.as_ref().unwrap().malicious_fraction == 0.4));
    }
}
