"""Default ability catalog hook."""

from typing import List

import pluggy

from cyrange.catalog import AbilitySpec, Effect, Predicate, Scope, Tactic, Target
from cyrange.scenario import Privilege, Role
from cyrange.state import FactKind

hookimpl = pluggy.HookimplMarker("cyrange")

USER = Predicate.privilege_at_least(Privilege.USER)
ADMIN = Predicate.privilege_at_least(Privilege.ADMIN)
WINDOWS = Predicate.host_property("os_family", "windows")
LINUX = Predicate.host_property("os_family", "linux")

# Exfiltration game: collection and exfiltration variants
COLLECTION_ABILITIES = [
    AbilitySpec(
        21,
        "screen_capture",
        Tactic.COLLECTION,
        "T1113",
        preconditions=(USER, WINDOWS),
        effects=(Effect.add_fact(FactKind.OS),),
        sim_latency_s=3.0,
        description="Capture the desktop; reveals the operating system.",
    ),
    AbilitySpec(
        22,
        "clipboard_data",
        Tactic.COLLECTION,
        "T1115",
        preconditions=(USER, WINDOWS),
        effects=(Effect.add_fact(FactKind.REMOTE),),
        sim_latency_s=2.0,
        description="Read the clipboard; yields remote addresses used on the host.",
    ),
    AbilitySpec(
        23,
        "data_from_local_system",
        Tactic.COLLECTION,
        "T1005",
        preconditions=(USER,),
        effects=(
            Effect.add_fact(FactKind.LOCAL_USER),
            Effect.add_fact(FactKind.FILE, "target_file", when="target_files"),
        ),
        sim_latency_s=5.0,
        description="Search local profiles; finds the target file if it is local.",
    ),
    AbilitySpec(
        24,
        "local_email_collection",
        Tactic.COLLECTION,
        "T1114.001",
        preconditions=(USER, WINDOWS),
        effects=(Effect.add_fact(FactKind.EMAIL_SERVER),),
        base_success=0.9,
        sim_latency_s=8.0,
        description="Parse the local mail store; reveals the mail server.",
    ),
    AbilitySpec(
        25,
        "data_from_network_shared_drive",
        Tactic.COLLECTION,
        "T1039",
        preconditions=(USER,),
        effects=(
            Effect.add_fact(FactKind.NETWORK, target=Target.TRAFFIC_PEERS),
            Effect.add_fact(
                FactKind.FILE, "target_file", target=Target.TRAFFIC_PEERS, when="target_files"
            ),
        ),
        sim_latency_s=12.0,
        description="Browse shares of traffic peers; locates the target file.",
    ),
    AbilitySpec(
        26,
        "remote_data_staging",
        Tactic.COLLECTION,
        "T1074.002",
        preconditions=(USER, Predicate.fact_present(FactKind.FILE, "target_file", Scope.ANY_HOST)),
        effects=(Effect.add_fact(FactKind.FILE, "staged"),),
        sim_latency_s=15.0,
        description="Copy the located target file into a local staging directory.",
    ),
    AbilitySpec(
        27,
        "archive_via_utility",
        Tactic.COLLECTION,
        "T1560.001",
        preconditions=(USER, Predicate.fact_present(FactKind.FILE, "staged")),
        effects=(Effect.add_fact(FactKind.SYSTEM, "archive"),),
        sim_latency_s=6.0,
        description="Compress the staged data.",
    ),
    AbilitySpec(
        28,
        "exfil_over_c2_channel",
        Tactic.EXFILTRATION,
        "T1041",
        preconditions=(USER, Predicate.fact_present(FactKind.SYSTEM, "archive")),
        effects=(Effect.exfil_flag(),),
        sim_latency_s=20.0,
        description="Send the archive over the command and control channel.",
    ),
    AbilitySpec(
        29,
        "exfil_over_alternative_protocol",
        Tactic.EXFILTRATION,
        "T1048.003",
        preconditions=(USER, Predicate.fact_present(FactKind.SYSTEM, "archive")),
        effects=(Effect.exfil_flag(),),
        base_success=0.6,
        sim_latency_s=20.0,
        description="Send the archive over unencrypted FTP.",
    ),
    AbilitySpec(
        30,
        "scheduled_transfer",
        Tactic.EXFILTRATION,
        "T1029",
        preconditions=(USER, LINUX, Predicate.fact_present(FactKind.SYSTEM, "archive")),
        effects=(Effect.exfil_flag(),),
        sim_latency_s=60.0,
        description="Ship the archive from a cron job.",
    ),
]

# Domain controller game: discovery, credentials, escalation, lateral movement
DOMAIN_ABILITIES = [
    AbilitySpec(
        1,
        "account_discovery",
        Tactic.DISCOVERY,
        "T1087.001",
        preconditions=(USER,),
        effects=(Effect.add_fact(FactKind.LOCAL_USER),),
        sim_latency_s=2.0,
    ),
    AbilitySpec(
        2,
        "network_share_discovery",
        Tactic.DISCOVERY,
        "T1135",
        preconditions=(USER, WINDOWS),
        effects=(Effect.add_fact(FactKind.FILE),),
        base_success=0.8,
        sim_latency_s=4.0,
    ),
    AbilitySpec(
        3,
        "system_information_discovery",
        Tactic.DISCOVERY,
        "T1082",
        preconditions=(USER,),
        effects=(
            Effect.add_fact(FactKind.OS),
            Effect.add_fact(FactKind.ROLE),
            Effect.add_fact(FactKind.SYSTEM),
            Effect.add_fact(FactKind.MODIFIABLE_SERVICE, when="modifiable_service"),
            Effect.add_fact(FactKind.DEFENSE, when="defenses"),
        ),
        sim_latency_s=2.0,
        description="Enumerate OS, services and defenses of the hand's host.",
    ),
    AbilitySpec(
        4,
        "setuid_sudo_escalation",
        Tactic.PRIVILEGE_ESCALATION,
        "T1548.003",
        preconditions=(USER, LINUX, Predicate.fact_present(FactKind.MODIFIABLE_SERVICE)),
        effects=(Effect.elevate_hand(Privilege.ADMIN),),
        sim_latency_s=5.0,
        description="Abuse a writable service binary run through sudo.",
    ),
    AbilitySpec(
        5,
        "credentials_in_files",
        Tactic.CREDENTIAL_ACCESS,
        "T1552.001",
        preconditions=(USER, WINDOWS),
        effects=(
            Effect.add_fact(FactKind.LOCAL_CRED, when="has_local_admin_cred"),
            Effect.add_fact(FactKind.DOMAIN_ADMIN_CRED, when="has_domain_admin_session"),
        ),
        sim_latency_s=10.0,
        description="Grep scripts and profiles for stored passwords.",
    ),
    AbilitySpec(
        6,
        "lsass_memory_dump",
        Tactic.CREDENTIAL_ACCESS,
        "T1003.001",
        preconditions=(ADMIN, WINDOWS),
        effects=(
            Effect.add_fact(FactKind.DOMAIN_USER_CRED),
            Effect.add_fact(FactKind.LOCAL_CRED, when="has_local_admin_cred"),
        ),
        base_success=0.6,
        antivirus_factor=0.5,
        sim_latency_s=15.0,
    ),
    AbilitySpec(
        7,
        "remote_system_discovery",
        Tactic.DISCOVERY,
        "T1018",
        preconditions=(USER,),
        effects=(
            Effect.add_fact(FactKind.NETWORK, target=Target.REACHABLE_HOSTS),
            Effect.add_fact(
                FactKind.ROLE, target=Target.REACHABLE_HOSTS, when="is_domain_controller"
            ),
            Effect.add_fact(FactKind.NETWORK),
            Effect.add_fact(FactKind.REMOTE),
            Effect.add_fact(FactKind.DOMAIN_NAME),
        ),
        sim_latency_s=6.0,
        description="Scan reachable hosts and list remote sessions of the hand's host.",
    ),
    AbilitySpec(
        8,
        "bypass_uac",
        Tactic.PRIVILEGE_ESCALATION,
        "T1548.002",
        preconditions=(USER, WINDOWS, Predicate.fact_present(FactKind.SYSTEM)),
        effects=(Effect.elevate_hand(Privilege.ADMIN),),
        base_success=0.7,
        sim_latency_s=5.0,
    ),
    AbilitySpec(
        9,
        "ssh_with_local_credentials",
        Tactic.LATERAL_MOVEMENT,
        "T1021.004",
        preconditions=(USER, Predicate.fact_present(FactKind.LOCAL_CRED, scope=Scope.ANY_HOST)),
        effects=(Effect.spawn_hand(Privilege.USER, Target.REACHABLE_HOSTS, when="is_linux"),),
        base_success=0.4,
        sim_latency_s=30.0,
    ),
    AbilitySpec(
        10,
        "psexec_service_execution",
        Tactic.LATERAL_MOVEMENT,
        "T1569.002",
        preconditions=(
            ADMIN,
            WINDOWS,
            Predicate.fact_present(FactKind.LOCAL_CRED, scope=Scope.ANY_HOST),
        ),
        effects=(Effect.spawn_hand(Privilege.ADMIN, Target.REACHABLE_HOSTS, when="is_windows"),),
        base_success=0.4,
        sim_latency_s=40.0,
    ),
    AbilitySpec(
        11,
        "pass_the_hash",
        Tactic.LATERAL_MOVEMENT,
        "T1550.002",
        preconditions=(ADMIN, Predicate.fact_present(FactKind.DOMAIN_USER_CRED)),
        effects=(Effect.spawn_hand(Privilege.USER, Target.REACHABLE_HOSTS, when="is_windows"),),
        base_success=0.4,
        sim_latency_s=40.0,
    ),
    AbilitySpec(
        12,
        "domain_admin_logon",
        Tactic.LATERAL_MOVEMENT,
        "T1078.002",
        preconditions=(
            USER,
            Predicate.fact_present(FactKind.DOMAIN_ADMIN_CRED),
            Predicate.reachable_role(Role.DOMAIN_CONTROLLER),
        ),
        effects=(Effect.spawn_hand(Privilege.DOMAIN_ADMIN, Target.DOMAIN_CONTROLLER),),
        sim_latency_s=45.0,
        description="Log on to the domain controller with a domain admin account.",
    ),
    AbilitySpec(
        13,
        "ssh_session_hijacking",
        Tactic.LATERAL_MOVEMENT,
        "T1563.001",
        preconditions=(ADMIN, Predicate.fact_present(FactKind.REMOTE)),
        effects=(Effect.spawn_hand(Privilege.USER, Target.TRAFFIC_PEERS),),
        sim_latency_s=30.0,
        description="Ride an open SSH session to the peer it connects to.",
    ),
]

BUILTIN_ABILITIES = DOMAIN_ABILITIES + COLLECTION_ABILITIES


@hookimpl(trylast=True)
def register_abilities() -> List[AbilitySpec]:
    """Return the built-in catalog."""
    return list(BUILTIN_ABILITIES)
