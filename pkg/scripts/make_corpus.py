"""Regenerate the bundled synthetic finance QA corpus.

The corpus is generated from a hand-written glossary of securities and
finance terms; it is synthetic demo data, not scraped from anywhere.
Rows use the fused QA_text column format:
    ##Question: <q>## Answer: <a>
"""

import csv
import os

TERMS = {
    "an Index": "An Index measures the performance of a group of stocks serving as a benchmark.",
    "a Stock": "A Stock is a security representing partial ownership of a corporation.",
    "a Bond": "A Bond is a fixed income instrument representing a loan made by an investor to a borrower.",
    "a Dividend": "A Dividend is a distribution of a portion of company earnings to shareholders.",
    "Market Capitalization": "Market Capitalization is the total market value of a company's outstanding shares.",
    "an ETF": "An ETF is an exchange traded fund that tracks an index or basket of assets and trades like a stock.",
    "a Mutual Fund": "A Mutual Fund pools money from many investors to purchase a diversified portfolio of securities.",
    "an Index Fund": "An Index Fund is a mutual fund built to replicate the performance of a market index at low cost.",
    "Diversification": "Diversification spreads investments across multiple assets to reduce overall portfolio risk.",
    "Risk Tolerance": "Risk Tolerance is an investor's willingness to accept volatility in exchange for potential returns.",
    "Volatility": "Volatility measures how much the price of an asset fluctuates over time.",
    "Liquidity": "Liquidity describes how quickly an asset can be converted into cash without affecting its price.",
    "a Bull Market": "A Bull Market is a sustained period of rising asset prices and investor optimism.",
    "a Bear Market": "A Bear Market is a prolonged decline in asset prices, commonly a drop of twenty percent or more.",
    "a Portfolio": "A Portfolio is the collection of financial assets held by an investor or institution.",
    "an IPO": "An IPO is an initial public offering through which a private company first sells shares to the public.",
    "a Broker": "A Broker is an intermediary who executes buy and sell orders on behalf of investors for a fee.",
    "a Stock Exchange": "A Stock Exchange is a regulated marketplace where securities are bought and sold.",
    "the P/E Ratio": "The P/E Ratio divides a company's share price by its earnings per share to gauge valuation.",
    "Earnings Per Share": "Earnings Per Share is a company's net profit divided by its number of outstanding shares.",
    "a Blue Chip Stock": "A Blue Chip Stock is a share of a large, established company with a record of stable earnings.",
    "a Growth Stock": "A Growth Stock is a share of a company expected to grow revenue faster than the market average.",
    "a Value Stock": "A Value Stock trades below its estimated intrinsic value based on fundamentals.",
    "Value Investing": "Value Investing focuses on buying undervalued stocks expected to appreciate over time.",
    "Growth Investing": "Growth Investing seeks companies whose earnings are expected to outpace the broader market.",
    "Dollar Cost Averaging": "Dollar Cost Averaging invests a fixed amount at regular intervals regardless of price.",
    "Compound Interest": "Compound Interest is interest earned on both the principal and previously accumulated interest.",
    "an Asset Class": "An Asset Class is a group of investments with similar characteristics, such as stocks, bonds, or cash.",
    "a Capital Gain": "A Capital Gain is the profit realized when an asset is sold for more than its purchase price.",
    "a Dividend Yield": "A Dividend Yield expresses annual dividends as a percentage of the current share price.",
    "a Stock Split": "A Stock Split increases the number of shares outstanding while proportionally lowering the price.",
    "a Limit Order": "A Limit Order instructs a broker to trade only at a specified price or better.",
    "a Market Order": "A Market Order instructs a broker to execute a trade immediately at the best available price.",
    "a Stop Loss Order": "A Stop Loss Order automatically sells a position once its price falls to a preset level.",
    "Short Selling": "Short Selling borrows shares to sell now, hoping to repurchase them later at a lower price.",
    "a Margin Account": "A Margin Account lets an investor borrow money from a broker to purchase securities.",
    "Leverage": "Leverage uses borrowed capital to increase the potential return and risk of an investment.",
    "a Hedge Fund": "A Hedge Fund is a pooled investment vehicle using flexible strategies to seek absolute returns.",
    "Hedging": "Hedging takes an offsetting position to reduce the risk of adverse price movements.",
    "a Derivative": "A Derivative is a contract whose value depends on the price of an underlying asset.",
    "an Option": "An Option grants the right, but not the obligation, to buy or sell an asset at a set price.",
    "a Call Option": "A Call Option gives the holder the right to buy an underlying asset at the strike price.",
    "a Put Option": "A Put Option gives the holder the right to sell an underlying asset at the strike price.",
    "a Futures Contract": "A Futures Contract obliges parties to trade an asset at a predetermined price on a future date.",
    "the Strike Price": "The Strike Price is the fixed price at which an option can be exercised.",
    "a Yield Curve": "A Yield Curve plots interest rates of bonds with equal credit quality across maturities.",
    "an Inverted Yield Curve": "An Inverted Yield Curve occurs when short term rates exceed long term rates, often preceding recessions.",
    "a Treasury Bond": "A Treasury Bond is a long term debt security issued by a national government.",
    "a Corporate Bond": "A Corporate Bond is debt issued by a company to raise capital, paying periodic interest.",
    "a Municipal Bond": "A Municipal Bond is debt issued by a state or local government, often with tax advantages.",
    "a Coupon Rate": "A Coupon Rate is the annual interest rate paid by a bond relative to its face value.",
    "Face Value": "Face Value is the amount a bond issuer agrees to repay the bondholder at maturity.",
    "Maturity": "Maturity is the date on which a debt instrument's principal becomes due and payable.",
    "a Credit Rating": "A Credit Rating assesses the creditworthiness of a borrower or a specific debt issue.",
    "Default Risk": "Default Risk is the chance that a borrower fails to make required payments on its debt.",
    "Inflation": "Inflation is the rate at which the general level of prices for goods and services rises.",
    "Deflation": "Deflation is a sustained decrease in the general price level of goods and services.",
    "a Central Bank": "A Central Bank manages a nation's currency, money supply, and interest rates.",
    "Monetary Policy": "Monetary Policy is central bank action that manages money supply and interest rates.",
    "Fiscal Policy": "Fiscal Policy uses government spending and taxation to influence the economy.",
    "Quantitative Easing": "Quantitative Easing is large scale asset purchasing by a central bank to inject liquidity.",
    "the Federal Funds Rate": "The Federal Funds Rate is the overnight lending rate between banks set as a policy target.",
    "GDP": "GDP is the total monetary value of all finished goods and services produced within a country.",
    "a Recession": "A Recession is a significant decline in economic activity lasting more than a few months.",
    "Unemployment Rate": "The Unemployment Rate is the share of the labor force that is jobless and seeking work.",
    "the CPI": "The CPI tracks changes in the prices paid by consumers for a representative basket of goods.",
    "an Exchange Rate": "An Exchange Rate is the price of one currency expressed in terms of another currency.",
    "Foreign Exchange": "Foreign Exchange is the global marketplace for trading national currencies against one another.",
    "a Commodity": "A Commodity is a basic good, such as oil or gold, that is interchangeable with others of its type.",
    "Gold as an Investment": "Gold is a store of value often used to hedge against inflation and currency weakness.",
    "Crude Oil Benchmarks": "Crude Oil Benchmarks like Brent and WTI serve as reference prices for oil trading.",
    "a REIT": "A REIT is a company owning income producing real estate whose shares trade like stocks.",
    "an Annuity": "An Annuity is an insurance contract that pays a stream of income, often in retirement.",
    "a 401k": "A 401k is an employer sponsored retirement account funded with pre tax contributions.",
    "an IRA": "An IRA is an individual retirement account offering tax advantages for long term savings.",
    "a Roth IRA": "A Roth IRA is funded with after tax dollars and allows tax free qualified withdrawals.",
    "a Pension Fund": "A Pension Fund pools retirement contributions to pay future benefits to employees.",
    "an Expense Ratio": "An Expense Ratio is the annual fund operating cost expressed as a percentage of assets.",
    "Net Asset Value": "Net Asset Value is a fund's assets minus liabilities divided by shares outstanding.",
    "an Asset Allocation": "Asset Allocation divides a portfolio among asset classes to balance risk and reward.",
    "Rebalancing": "Rebalancing restores a portfolio's target asset mix by buying and selling holdings.",
    "a Bid Price": "A Bid Price is the highest price a buyer is currently willing to pay for a security.",
    "an Ask Price": "An Ask Price is the lowest price a seller is currently willing to accept for a security.",
    "the Bid-Ask Spread": "The Bid-Ask Spread is the gap between the highest bid and the lowest ask price.",
    "Trading Volume": "Trading Volume is the number of shares or contracts exchanged during a given period.",
    "a Moving Average": "A Moving Average smooths price data by averaging it over a rolling time window.",
    "Technical Analysis": "Technical Analysis studies price charts and patterns to forecast future price movement.",
    "Fundamental Analysis": "Fundamental Analysis values a security using financial statements and economic factors.",
    "a Balance Sheet": "A Balance Sheet reports a company's assets, liabilities, and shareholder equity at a point in time.",
    "an Income Statement": "An Income Statement summarizes revenues, costs, and profit over a reporting period.",
    "a Cash Flow Statement": "A Cash Flow Statement tracks cash moving in and out of a business across activities.",
    "EBITDA": "EBITDA measures earnings before interest, taxes, depreciation, and amortization.",
    "Return on Equity": "Return on Equity divides net income by shareholder equity to measure profitability.",
    "a Profit Margin": "A Profit Margin expresses net income as a percentage of total revenue.",
    "Book Value": "Book Value is a company's total assets minus its total liabilities on the balance sheet.",
    "Intrinsic Value": "Intrinsic Value is the estimated true worth of an asset based on fundamentals.",
    "a Shareholder": "A Shareholder is a person or institution that owns at least one share of a company's stock.",
    "a Proxy Vote": "A Proxy Vote lets a shareholder delegate their voting power at a company meeting.",
    "Insider Trading": "Insider Trading is trading a public company's stock using material non public information.",
    "the SEC": "The SEC is the United States regulator that enforces securities laws and protects investors.",
    "a Prospectus": "A Prospectus is a formal document describing an investment offering to the public.",
    "Due Diligence": "Due Diligence is the investigation of an investment's facts and risks before committing capital.",
    "a Custodian Bank": "A Custodian Bank safeguards a firm's financial assets and settles its trades.",
    "Settlement": "Settlement is the transfer of securities and cash that completes a trade.",
    "a Clearing House": "A Clearing House stands between trade counterparties to guarantee settlement.",
    "Arbitrage": "Arbitrage exploits price differences of the same asset across markets for risk free profit.",
    "Alpha": "Alpha is the excess return of an investment relative to its benchmark index.",
    "Beta": "Beta measures a security's volatility relative to the overall market.",
    "the Sharpe Ratio": "The Sharpe Ratio divides excess return by volatility to measure risk adjusted performance.",
    "Standard Deviation in Finance": "Standard Deviation quantifies the dispersion of investment returns around their mean.",
    "Correlation of Assets": "Correlation measures how the returns of two assets move in relation to each other.",
    "the Efficient Market Hypothesis": "The Efficient Market Hypothesis holds that asset prices reflect all available information.",
    "Dollar Denominated Debt": "Dollar Denominated Debt is borrowing issued in US dollars by a foreign entity.",
    "an Emerging Market": "An Emerging Market is a developing economy with growing but less mature capital markets.",
    "a Developed Market": "A Developed Market is an advanced economy with deep, liquid, and well regulated markets.",
    "the S&P 500": "The S&P 500 is an index of five hundred large US companies weighted by market value.",
    "the Dow Jones Industrial Average": "The Dow Jones Industrial Average tracks thirty large US companies using price weighting.",
    "the NASDAQ Composite": "The NASDAQ Composite is an index of thousands of stocks listed on the NASDAQ exchange.",
    "KOSPI": "KOSPI is the index of all common stocks traded on the Korea Exchange main board.",
    "the FTSE 100": "The FTSE 100 is an index of the one hundred largest companies on the London Stock Exchange.",
    "the Nikkei 225": "The Nikkei 225 is a price weighted index of large companies on the Tokyo Stock Exchange.",
    "a Circuit Breaker": "A Circuit Breaker is a temporary trading halt triggered by a steep market decline.",
    "After Hours Trading": "After Hours Trading is buying and selling securities outside regular exchange hours.",
    "a Penny Stock": "A Penny Stock is a low priced, thinly traded share of a small company carrying high risk.",
    "a Dividend Aristocrat": "A Dividend Aristocrat is a company that has raised its dividend for at least twenty five straight years.",
    "Dividend Reinvestment": "Dividend Reinvestment automatically uses cash dividends to purchase additional shares.",
    "a Bond Ladder": "A Bond Ladder staggers bond maturities so principal is returned at regular intervals.",
    "Duration of a Bond": "Duration measures a bond price's sensitivity to changes in interest rates.",
    "a Zero Coupon Bond": "A Zero Coupon Bond pays no periodic interest and is sold at a discount to face value.",
    "a Convertible Bond": "A Convertible Bond can be exchanged for a preset number of the issuer's shares.",
    "Preferred Stock": "Preferred Stock pays fixed dividends and ranks ahead of common stock in liquidation.",
    "a Rights Issue": "A Rights Issue lets existing shareholders buy new shares at a discount before the public.",
    "a Share Buyback": "A Share Buyback is a company repurchasing its own shares to reduce the count outstanding.",
    "Vesting": "Vesting is the process by which an employee earns full rights to equity compensation over time.",
    "an Escrow Account": "An Escrow Account holds funds with a neutral third party until contract conditions are met.",
    "Underwriting": "Underwriting is the process by which a bank assumes the risk of distributing new securities.",
    "a Syndicated Loan": "A Syndicated Loan is financing provided jointly by a group of lenders to one borrower.",
    "Securitization": "Securitization pools income producing assets and sells them as tradable securities.",
    "a Credit Default Swap": "A Credit Default Swap is insurance like protection against the default of a borrower.",
    "Mark to Market": "Mark to Market values an asset at its current market price rather than its book cost.",
    "Basis Points": "Basis Points are hundredths of a percentage point used to quote rates and fees.",
    "a Stress Test": "A Stress Test models how a bank or portfolio performs under severe adverse scenarios.",
    "Anti Money Laundering": "Anti Money Laundering comprises controls that detect and prevent disguising illicit funds.",
    "Know Your Customer": "Know Your Customer rules require firms to verify client identity and assess risk.",
}


def main():
    out = os.path.join(os.path.dirname(__file__), "..", "src", "tinypeft", "data",
                       "finance_qa.csv")
    rows = [f"##Question: What is {term}?## Answer: {answer}"
            for term, answer in TERMS.items()]
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["QA_text"])
        for r in rows:
            w.writerow([r])
    print(f"wrote {len(rows)} rows -> {os.path.normpath(out)}")


if __name__ == "__main__":
    main()
