"""Reference values frozen from 30-digit mpmath quadrature before the build.

Quartic W(t) = (1 - t^2)^2 unless noted; values are ∫_{-1}^{t} W^{(p-1)/p}.
"""

C_P = {
    2.0: 2.0,
    2.25: 1.987666975002417236,
    2.5: 1.9601317042077892876,
    2.75: 1.9260702242522327221,
    3.0: 1.8898815748423097472,
}

PRIMITIVE_AT_WELL = {
    2.0: 4.0 / 3.0,
    2.25: 1.2936232710695920812,
    2.5: 1.2642661762862594288,
    2.75: 1.2416656316965008792,
    3.0: 1.2237225646476691734,
}

SIGMA_P = {
    2.0: 8.0 / 3.0,
    2.25: 2.5712922539996280992,
    2.5: 2.4781282146962510542,
    2.75: 2.3915352016879696507,
    3.0: 2.3126907276464072168,
}

# p = 2.5 primitive at t = 0.3
PRIMITIVE_25_AT_03 = 0.9213924407721971234
# wells 0 and 2, amplitude 0.5, p = 2.5, primitive at t = 2
PRIMITIVE_25_SHIFTED = 0.83410461046615890531

# γ_p upper bound, quartic V with wells ±1, p = 2.5, R = H = 8, Δ = 1/16, conforming P1 energy.
# Main multi-start descent: 3.870777029121; independent projected-BB descent from 5 random
# starts (scripts/gamma_reference.py): 3.8707770275 to 3.8707770353.
GAMMA_REF_25_R8_D16 = 3.870777029
GAMMA_REF_COARSE = {0.25: 3.88698244466, 0.125: 3.87576492250}
