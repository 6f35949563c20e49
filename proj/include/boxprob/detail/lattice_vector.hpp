#pragma once

// Extensible base-2 rank-1 lattice generating vector, produced by
// tools/lattice_search.py (embedded randomized CBC, weights 1/j^2,
// optimized for 2^6 .. 2^18 points). Components beyond the table are
// filled by a deterministic odd-integer hash and are not optimized.

#include <array>
#include <cstdint>

namespace boxprob::detail {

inline constexpr std::array<std::uint32_t, 128> kLatticeGenerator = {
    1u, 2233134375u, 3274106717u, 4045988533u, 4292664121u, 2910068781u,
    2738512785u, 2688411763u, 2226439189u, 2153821489u, 322185537u, 3186145589u,
    2929162215u, 1961257221u, 1291647035u, 3092398201u, 1521954737u, 2102019705u,
    1608804555u, 317377083u, 3132434031u, 3327231135u, 165112457u, 965815749u,
    3359769209u, 3115805045u, 346678653u, 35173971u, 1677155595u, 3377843707u,
    658158359u, 3427439971u, 2122851233u, 1143968227u, 855662241u, 774802821u,
    3137969739u, 2491311837u, 3230750487u, 3714582249u, 3297909165u, 3945463495u,
    170474379u, 3686270653u, 294974675u, 2368029831u, 2037580901u, 231765909u,
    1387282685u, 312157247u, 2732612191u, 2281940361u, 3007126031u, 3388287953u,
    1550992509u, 744634225u, 2731365561u, 3724687941u, 1178898969u, 2971378055u,
    3484950995u, 2954544279u, 2952809095u, 1607926175u, 1735285835u, 3058119921u,
    2124970409u, 1009004403u, 2681748717u, 795700471u, 1570861431u, 535006981u,
    582963533u, 2357497373u, 2084669589u, 1677930139u, 438134733u, 102770771u,
    3920902647u, 97379415u, 4053677139u, 3119732783u, 2478881251u, 2434359633u,
    3695140477u, 2927144685u, 2363898563u, 1989879185u, 750919161u, 3694058411u,
    2831878605u, 2985988361u, 1264278041u, 3995365023u, 1767549673u, 3566873547u,
    3292579765u, 1941672113u, 3192045855u, 3998006413u, 2290105531u, 3125108177u,
    2673852027u, 2573519191u, 2415884703u, 2328622269u, 1674161509u, 3545898649u,
    1031243525u, 4122536721u, 2778255599u, 1447977807u, 1048754039u, 4144410065u,
    2935453553u, 3346589177u, 2695425729u, 184712457u, 4171528459u, 2129559269u,
    3685898385u, 768983215u, 1785469391u, 609217015u, 2182123129u, 4086611661u,
    3724535427u, 3412252191u
};

}  // namespace boxprob::detail
