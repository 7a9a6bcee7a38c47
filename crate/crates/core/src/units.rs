//! Unit conversions between the market's native quoting units and the
//! canonical internal system (GW, Year, M€).
//!
//! 1 GW running for one year delivers 8 760 000 MWh, so a price of
//! 1 €/MWh is a flow of 8.76 M€/(GW·Year). Capacity-cost quotes in €/kW
//! are numerically identical in M€/GW.

/// M€/(GW·Year) per €/MWh.
pub const MEUR_PER_GW_YEAR_PER_EUR_MWH: f64 = 8.76;

/// M€/GW per €/kW.
pub const MEUR_PER_GW_PER_EUR_KW: f64 = 1.0;

/// M€/(GW·Year) per €/(kW·year).
pub const MEUR_PER_GW_YEAR_PER_EUR_KW_YEAR: f64 = 1.0;

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// TWh delivered by 1 GW over 1 Year. Equals M€ per (TWh · €/MWh), which is
/// why per-MWh normalization below divides M€ amounts by TWh directly.
pub const TWH_PER_GW_YEAR: f64 = 8.76;

pub fn eur_per_mwh_to_flow(v: f64) -> f64 {
    v * MEUR_PER_GW_YEAR_PER_EUR_MWH
}

pub fn flow_to_eur_per_mwh(v: f64) -> f64 {
    v / MEUR_PER_GW_YEAR_PER_EUR_MWH
}

pub fn eur_per_kw_to_meur_per_gw(v: f64) -> f64 {
    v * MEUR_PER_GW_PER_EUR_KW
}
