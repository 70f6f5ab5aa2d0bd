//! Role-based baseline: the decision a plain RBAC system would take.

use crate::engine::{AuthorizationProfile, Decision, ReasonCode, Request};

/// Permits any request whose action the agent's role allows in a graph the
/// agent is confined to. Resources, predicates, attributes and wildcards are
/// not looked at. Unregistered agents are still denied.
pub fn rbac_only_authorize(profile: Option<&AuthorizationProfile>, request: &Request) -> Decision {
    let Some(profile) = profile.filter(|p| p.agent == *request.agent()) else {
        return Decision::deny(ReasonCode::NoProfile, format!("no live profile for {}", request.agent()));
    };
    if !profile.allowed_permissions.contains(&request.action()) {
        return Decision::deny(
            ReasonCode::ActionNotAllowed,
            format!("{} is not an allowed permission", request.action()),
        );
    }
    if !profile.confined_graphs.contains(request.target_graph()) {
        return Decision::deny(
            ReasonCode::GraphNotConfined,
            format!("graph {} is outside the confined graphs", request.target_graph()),
        );
    }
    Decision::permit().fired_by("rbac:role-permission")
}
